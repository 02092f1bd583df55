#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vlogger/tensor.hpp"

namespace vlogger {
namespace ag {

// Reverse-mode tape. Nodes own their backward closure; edges point from a
// node to its parents, so the graph is acyclic and reference counting works.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor& gout)> backward_fn;

  explicit Node(Tensor v) : value(std::move(v)) {}

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor::zeros(value.shape);
  }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  static Var constant(Tensor v) {
    return Var(std::make_shared<Node>(std::move(v)));
  }
  static Var param(Tensor v) {
    auto n = std::make_shared<Node>(std::move(v));
    n->requires_grad = true;
    return Var(n);
  }

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const NodePtr& node() const { return node_; }
  bool valid() const { return bool(node_); }

  const Shape& shape() const { return node_->value.shape; }
  Index dim(int i) const { return node_->value.dim(i); }

  void zero_grad() {
    if (node_) node_->grad = Tensor::zeros(node_->value.shape);
  }

 private:
  NodePtr node_;
};

inline void accumulate(const NodePtr& p, const Tensor& g) {
  if (!p->requires_grad && p->parents.empty()) return;  // leaf constant
  p->ensure_grad();
  p->grad.data += g.data;
}

namespace detail {

inline NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(const Tensor&)> bw) {
  auto n = std::make_shared<Node>(std::move(value));
  bool any = false;
  for (auto& p : parents)
    if (p->requires_grad || !p->parents.empty()) any = true;
  n->parents = std::move(parents);
  if (any) {
    n->requires_grad = true;
    n->backward_fn = std::move(bw);
  }
  return n;
}

}  // namespace detail

// Runs reverse-mode accumulation from a scalar (or seeded) root.
inline void backward(const Var& root, Tensor seed = Tensor()) {
  NodePtr r = root.node();
  if (seed.size() == 0) seed = Tensor::full(r->value.shape, 1.0);
  check_same_shape(seed, r->value, "backward seed");

  // Topological order via iterative DFS.
  std::vector<NodePtr> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(r, 0);
  seen.insert(r.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      NodePtr p = n->parents[i++];
      if (seen.insert(p.get()).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  r->ensure_grad();
  r->grad.data += seed.data;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = it->get();
    if (n->backward_fn && n->grad.size()) n->backward_fn(n->grad);
  }
}

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.data += b.value().data;
  auto pa = a.node(), pb = b.node();
  return Var(detail::make_op(std::move(out), {pa, pb}, [pa, pb](const Tensor& g) {
    accumulate(pa, g);
    accumulate(pb, g);
  }));
}

inline Var sub(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.data -= b.value().data;
  auto pa = a.node(), pb = b.node();
  return Var(detail::make_op(std::move(out), {pa, pb}, [pa, pb](const Tensor& g) {
    accumulate(pa, g);
    Tensor ng = g;
    ng.data = -ng.data;
    accumulate(pb, ng);
  }));
}

inline Var mul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  out.data *= b.value().data;
  auto pa = a.node(), pb = b.node();
  return Var(detail::make_op(std::move(out), {pa, pb}, [pa, pb](const Tensor& g) {
    Tensor ga = g;
    ga.data *= pb->value.data;
    accumulate(pa, ga);
    Tensor gb = g;
    gb.data *= pa->value.data;
    accumulate(pb, gb);
  }));
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out.data *= s;
  auto pa = a.node();
  return Var(detail::make_op(std::move(out), {pa}, [pa, s](const Tensor& g) {
    Tensor ga = g;
    ga.data *= s;
    accumulate(pa, ga);
  }));
}

inline Var silu(const Var& a) {
  Tensor out = a.value();
  for (Index i = 0; i < out.size(); ++i) {
    double x = out.data[i];
    out.data[i] = x / (1.0 + std::exp(-x));
  }
  auto pa = a.node();
  return Var(detail::make_op(std::move(out), {pa}, [pa](const Tensor& g) {
    Tensor ga = g;
    for (Index i = 0; i < ga.size(); ++i) {
      double x = pa->value.data[i];
      double s = 1.0 / (1.0 + std::exp(-x));
      ga.data[i] *= s * (1.0 + x * (1.0 - s));
    }
    accumulate(pa, ga);
  }));
}

// ---- shape ops ----

inline Var reshape(const Var& a, Shape s) {
  Tensor out = a.value().reshaped(s);
  auto pa = a.node();
  return Var(detail::make_op(std::move(out), {pa}, [pa](const Tensor& g) {
    accumulate(pa, g.reshaped(pa->value.shape));
  }));
}

// Generic rank-4 permutation; backward applies the inverse permutation.
inline Tensor permute4_tensor(const Tensor& x, const std::array<int, 4>& perm) {
  if (x.rank() != 4) throw ShapeError("permute4: rank != 4");
  Shape os = {x.shape[perm[0]], x.shape[perm[1]], x.shape[perm[2]],
              x.shape[perm[3]]};
  Tensor out(os);
  Index s0 = x.shape[0], s1 = x.shape[1], s2 = x.shape[2], s3 = x.shape[3];
  Index idx[4];
  Index o = 0;
  for (idx[0] = 0; idx[0] < s0; ++idx[0])
    for (idx[1] = 0; idx[1] < s1; ++idx[1])
      for (idx[2] = 0; idx[2] < s2; ++idx[2])
        for (idx[3] = 0; idx[3] < s3; ++idx[3]) {
          Index j = ((idx[perm[0]] * os[1] + idx[perm[1]]) * os[2] +
                     idx[perm[2]]) * os[3] + idx[perm[3]];
          out.data[j] = x.data[o++];
        }
  return out;
}

inline Var permute4(const Var& a, std::array<int, 4> perm) {
  Tensor out = permute4_tensor(a.value(), perm);
  std::array<int, 4> inv{};
  for (int i = 0; i < 4; ++i) inv[perm[i]] = i;
  auto pa = a.node();
  return Var(detail::make_op(std::move(out), {pa}, [pa, inv](const Tensor& g) {
    accumulate(pa, permute4_tensor(g, inv));
  }));
}

// ---- linear algebra ----

inline Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
    throw ShapeError("matmul: " + shape_str(av.shape) + " * " +
                     shape_str(bv.shape));
  Tensor out({av.shape[0], bv.shape[1]});
  out.mat() = av.mat() * bv.mat();
  auto pa = a.node(), pb = b.node();
  return Var(detail::make_op(std::move(out), {pa, pb}, [pa, pb](const Tensor& g) {
    Index n = pa->value.shape[0], k = pa->value.shape[1],
          m = pb->value.shape[1];
    Tensor ga({n, k});
    ga.mat() = g.mat(n, m) * pb->value.mat().transpose();
    accumulate(pa, ga);
    Tensor gb({k, m});
    gb.mat() = pa->value.mat().transpose() * g.mat(n, m);
    accumulate(pb, gb);
  }));
}

// x [N,C] + b [C] broadcast over rows.
inline Var add_bias(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  Index c = bv.size();
  if (xv.rank() != 2 || xv.shape[1] != c) throw ShapeError("add_bias");
  Tensor out = xv;
  out.mat().rowwise() += bv.mat(1, c).row(0);
  auto px = x.node(), pb = b.node();
  return Var(detail::make_op(std::move(out), {px, pb}, [px, pb, c](const Tensor& g) {
    accumulate(px, g);
    Tensor gb({c});
    gb.mat(1, c).row(0) = g.mat(g.shape[0], c).colwise().sum();
    accumulate(pb, gb);
  }));
}

inline Var linear(const Var& x, const Var& w, const Var& b) {
  return add_bias(matmul(x, w), b);
}

// LayerNorm over each row of x [N,C] with affine (gamma, beta) [C].
inline Var layernorm(const Var& x, const Var& gamma, const Var& beta,
                     double eps = 1e-5) {
  const Tensor& xv = x.value();
  Index n = xv.shape.at(0), c = xv.shape.at(1);
  if (gamma.value().size() != c || beta.value().size() != c)
    throw ShapeError("layernorm affine size");
  Tensor xhat({n, c});
  Tensor inv_std({n});
  for (Index i = 0; i < n; ++i) {
    auto row = xv.mat().row(i);
    double mean = row.mean();
    double var = (row.array() - mean).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std.data[i] = is;
    xhat.mat().row(i) = (row.array() - mean) * is;
  }
  Tensor out({n, c});
  out.mat() = (xhat.mat().array().rowwise() *
               gamma.value().mat(1, c).row(0).array())
                  .rowwise() +
              beta.value().mat(1, c).row(0).array();
  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  return Var(detail::make_op(
      std::move(out), {px, pg, pb},
      [px, pg, pb, xhat, inv_std, n, c](const Tensor& g) {
        Tensor gg({c}), gb({c});
        gg.mat(1, c).row(0) =
            (g.mat(n, c).array() * xhat.mat().array()).colwise().sum();
        gb.mat(1, c).row(0) = g.mat(n, c).colwise().sum();
        accumulate(pg, gg);
        accumulate(pb, gb);
        Tensor gx({n, c});
        auto gamma_row = pg->value.mat(1, c).row(0);
        for (Index i = 0; i < n; ++i) {
          Eigen::RowVectorXd dy =
              g.mat(n, c).row(i).array() * gamma_row.array();
          auto xh = xhat.mat().row(i);
          double m1 = dy.mean();
          double m2 = (dy.array() * xh.array()).mean();
          gx.mat().row(i) =
              (dy.array() - m1 - xh.array() * m2) * inv_std.data[i];
        }
        accumulate(px, gx);
      }));
}

// ---- reductions ----

inline Var sum(const Var& a) {
  Tensor out({1});
  out.data[0] = a.value().data.sum();
  auto pa = a.node();
  return Var(detail::make_op(std::move(out), {pa}, [pa](const Tensor& g) {
    Tensor ga = Tensor::full(pa->value.shape, g.data[0]);
    accumulate(pa, ga);
  }));
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / double(a.value().size())); }

// Mean squared error against a constant target.
inline Var mse(const Var& pred, const Tensor& target) {
  check_same_shape(pred.value(), target, "mse");
  Var diff = sub(pred, Var::constant(target));
  return mean(mul(diff, diff));
}

}  // namespace ag
}  // namespace vlogger
