#pragma once

#include "vlogger/autograd.hpp"

namespace vlogger {
namespace ag {

namespace detail {

// im2col for a single [C,H,W] frame with 3x3 kernel, stride 1, zero padding.
// Output: [C*9, H*W] so that W_mat [Cout, C*9] * col = [Cout, H*W].
inline Eigen::MatrixXd im2col3x3(const double* frame, Index c, Index h,
                                 Index w) {
  Eigen::MatrixXd col = Eigen::MatrixXd::Zero(c * 9, h * w);
  for (Index ch = 0; ch < c; ++ch) {
    const double* plane = frame + ch * h * w;
    for (Index ky = 0; ky < 3; ++ky)
      for (Index kx = 0; kx < 3; ++kx) {
        Index row = ch * 9 + ky * 3 + kx;
        for (Index y = 0; y < h; ++y) {
          Index sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (Index x = 0; x < w; ++x) {
            Index sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            col(row, y * w + x) = plane[sy * w + sx];
          }
        }
      }
  }
  return col;
}

inline void col2im3x3_add(const Eigen::MatrixXd& dcol, double* frame, Index c,
                          Index h, Index w) {
  for (Index ch = 0; ch < c; ++ch) {
    double* plane = frame + ch * h * w;
    for (Index ky = 0; ky < 3; ++ky)
      for (Index kx = 0; kx < 3; ++kx) {
        Index row = ch * 9 + ky * 3 + kx;
        for (Index y = 0; y < h; ++y) {
          Index sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (Index x = 0; x < w; ++x) {
            Index sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            plane[sy * w + sx] += dcol(row, y * w + x);
          }
        }
      }
  }
}

}  // namespace detail

// 3x3 same-padding convolution applied per frame.
// x: [F, Cin, H, W], w: [Cout, Cin, 3, 3], b: [Cout] -> [F, Cout, H, W].
inline Var conv2d(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4 || wv.shape[2] != 3 || wv.shape[3] != 3)
    throw ShapeError("conv2d: bad ranks");
  Index f = xv.shape[0], cin = xv.shape[1], h = xv.shape[2], wd = xv.shape[3];
  Index cout = wv.shape[0];
  if (wv.shape[1] != cin || b.value().size() != cout)
    throw ShapeError("conv2d: channel mismatch");

  auto wmat = wv.mat(cout, cin * 9);
  Tensor out({f, cout, h, wd});
  std::vector<Eigen::MatrixXd> cols(static_cast<std::size_t>(f));
  for (Index fr = 0; fr < f; ++fr) {
    cols[std::size_t(fr)] =
        detail::im2col3x3(xv.data.data() + fr * cin * h * wd, cin, h, wd);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>
        of(out.data.data() + fr * cout * h * wd, cout, h * wd);
    of = wmat * cols[std::size_t(fr)];
    of.colwise() += Eigen::Map<const Eigen::VectorXd>(b.value().data.data(),
                                                      cout);
  }

  auto px = x.node(), pw = w.node(), pb = b.node();
  return Var(detail::make_op(
      std::move(out), {px, pw, pb},
      [px, pw, pb, cols, f, cin, cout, h, wd](const Tensor& g) {
        Tensor gw = Tensor::zeros(pw->value.shape);
        Tensor gb = Tensor::zeros({cout});
        Tensor gx = Tensor::zeros(px->value.shape);
        auto gwmat = gw.mat(cout, cin * 9);
        auto wmat = pw->value.mat(cout, cin * 9);
        for (Index fr = 0; fr < f; ++fr) {
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                         Eigen::Dynamic, Eigen::RowMajor>>
              gf(g.data.data() + fr * cout * h * wd, cout, h * wd);
          gwmat += gf * cols[std::size_t(fr)].transpose();
          gb.mat(1, cout).row(0) += gf.rowwise().sum().transpose();
          Eigen::MatrixXd dcol = wmat.transpose() * gf;
          detail::col2im3x3_add(dcol, gx.data.data() + fr * cin * h * wd, cin,
                                h, wd);
        }
        accumulate(pw, gw);
        accumulate(pb, gb);
        accumulate(px, gx);
      }));
}

// Multi-head attention, fused into one tape node.
//   x:   [B*Lq, C]   queries
//   ctx: [Lk, Cc] when shared_ctx (one context broadcast over the batch)
//        or [B*Lk, Cc] otherwise (e.g. self attention with ctx == x)
//   wq: [C, D], wk/wv: [Cc, D], wo: [D, C] with D = heads * dhead
inline Var attention(const Var& x, const Var& ctx, const Var& wq,
                     const Var& wk, const Var& wv, const Var& wo, Index batch,
                     Index lq, Index lk, Index heads, bool shared_ctx) {
  const Tensor& xv = x.value();
  const Tensor& cv = ctx.value();
  Index c = xv.shape.at(1);
  Index cc = cv.shape.at(1);
  Index d = wq.value().shape.at(1);
  if (xv.shape[0] != batch * lq) throw ShapeError("attention: query rows");
  if (cv.shape[0] != (shared_ctx ? lk : batch * lk))
    throw ShapeError("attention: context rows");
  if (wq.value().shape[0] != c || wk.value().shape[0] != cc ||
      wv.value().shape[0] != cc || wk.value().shape[1] != d ||
      wv.value().shape[1] != d || wo.value().shape[0] != d ||
      wo.value().shape[1] != c)
    throw ShapeError("attention: projection shapes");
  if (d % heads != 0) throw ShapeError("attention: heads must divide D");
  Index dh = d / heads;
  double inv_sqrt = 1.0 / std::sqrt(double(dh));

  Tensor q({batch * lq, d}), k({cv.shape[0], d}), v({cv.shape[0], d});
  q.mat() = xv.mat() * wq.value().mat();
  k.mat() = cv.mat() * wk.value().mat();
  v.mat() = cv.mat() * wv.value().mat();

  // Softmax weights kept for the backward pass: [B, heads, Lq, Lk].
  Tensor attn({batch, heads, lq, lk});
  Tensor o({batch * lq, d});
  for (Index b = 0; b < batch; ++b) {
    auto qb = q.mat().block(b * lq, 0, lq, d);
    auto kb = k.mat().block(shared_ctx ? 0 : b * lk, 0, lk, d);
    auto vb = v.mat().block(shared_ctx ? 0 : b * lk, 0, lk, d);
    for (Index hh = 0; hh < heads; ++hh) {
      Eigen::MatrixXd s =
          qb.middleCols(hh * dh, dh) * kb.middleCols(hh * dh, dh).transpose() *
          inv_sqrt;
      for (Index r = 0; r < lq; ++r) {
        Eigen::RowVectorXd row = s.row(r);
        double mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
        s.row(r) = row;
        for (Index cidx = 0; cidx < lk; ++cidx)
          attn.data[((b * heads + hh) * lq + r) * lk + cidx] = row(cidx);
      }
      o.mat().block(b * lq, hh * dh, lq, dh) = s * vb.middleCols(hh * dh, dh);
    }
  }
  Tensor out({batch * lq, c});
  out.mat() = o.mat() * wo.value().mat();

  auto px = x.node(), pc = ctx.node();
  auto pwq = wq.node(), pwk = wk.node(), pwv = wv.node(), pwo = wo.node();
  return Var(detail::make_op(
      std::move(out), {px, pc, pwq, pwk, pwv, pwo},
      [px, pc, pwq, pwk, pwv, pwo, q, k, v, o, attn, batch, lq, lk, heads, dh,
       d, inv_sqrt, shared_ctx](const Tensor& g) {
        Index c = px->value.shape[1];
        Tensor gwo({d, c}), go({batch * lq, d});
        gwo.mat() = o.mat().transpose() * g.mat(batch * lq, c);
        go.mat() = g.mat(batch * lq, c) * pwo->value.mat().transpose();
        accumulate(pwo, gwo);

        Tensor gq = Tensor::zeros(q.shape);
        Tensor gk = Tensor::zeros(k.shape);
        Tensor gv = Tensor::zeros(v.shape);
        for (Index b = 0; b < batch; ++b) {
          Index cb = shared_ctx ? 0 : b * lk;
          for (Index hh = 0; hh < heads; ++hh) {
            Eigen::MatrixXd a(lq, lk);
            for (Index r = 0; r < lq; ++r)
              for (Index cidx = 0; cidx < lk; ++cidx)
                a(r, cidx) =
                    attn.data[((b * heads + hh) * lq + r) * lk + cidx];
            auto gob = go.mat().block(b * lq, hh * dh, lq, dh);
            auto vb = v.mat().block(cb, hh * dh, lk, dh);
            Eigen::MatrixXd da = gob * vb.transpose();
            gv.mat().block(cb, hh * dh, lk, dh) += a.transpose() * gob;
            // softmax backward per row
            Eigen::MatrixXd ds(lq, lk);
            for (Index r = 0; r < lq; ++r) {
              double dot = (da.row(r).array() * a.row(r).array()).sum();
              ds.row(r) = a.row(r).array() * (da.row(r).array() - dot);
            }
            ds *= inv_sqrt;
            auto qb = q.mat().block(b * lq, hh * dh, lq, dh);
            auto kb = k.mat().block(cb, hh * dh, lk, dh);
            gq.mat().block(b * lq, hh * dh, lq, dh) += ds * kb;
            gk.mat().block(cb, hh * dh, lk, dh) += ds.transpose() * qb;
          }
        }
        Index crows = pc->value.shape[0];
        Index ccols = pc->value.shape[1];
        Tensor gwq({px->value.shape[1], d}), gwk({ccols, d}), gwv({ccols, d});
        gwq.mat() = px->value.mat().transpose() * gq.mat();
        gwk.mat() = pc->value.mat().transpose() * gk.mat();
        gwv.mat() = pc->value.mat().transpose() * gv.mat();
        accumulate(pwq, gwq);
        accumulate(pwk, gwk);
        accumulate(pwv, gwv);
        Tensor gx({batch * lq, px->value.shape[1]});
        gx.mat() = gq.mat() * pwq->value.mat().transpose();
        accumulate(px, gx);
        Tensor gc({crows, ccols});
        gc.mat() = gk.mat() * pwk->value.mat().transpose() +
                   gv.mat() * pwv->value.mat().transpose();
        accumulate(pc, gc);
      }));
}

// 2x2 average pooling over the spatial dims of [F, C, H, W].
inline Var avgpool2(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || xv.shape[2] % 2 || xv.shape[3] % 2)
    throw ShapeError("avgpool2: needs even spatial dims");
  Index f = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3];
  Tensor out({f, c, h / 2, w / 2});
  for (Index a = 0; a < f; ++a)
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < h / 2; ++y)
        for (Index xx = 0; xx < w / 2; ++xx)
          out.at4(a, ch, y, xx) =
              0.25 * (xv.at4(a, ch, 2 * y, 2 * xx) +
                      xv.at4(a, ch, 2 * y, 2 * xx + 1) +
                      xv.at4(a, ch, 2 * y + 1, 2 * xx) +
                      xv.at4(a, ch, 2 * y + 1, 2 * xx + 1));
  auto px = x.node();
  return Var(detail::make_op(std::move(out), {px}, [px, f, c, h, w](const Tensor& g) {
    Tensor gx = Tensor::zeros(px->value.shape);
    for (Index a = 0; a < f; ++a)
      for (Index ch = 0; ch < c; ++ch)
        for (Index y = 0; y < h / 2; ++y)
          for (Index xx = 0; xx < w / 2; ++xx) {
            double v = 0.25 * g.at4(a, ch, y, xx);
            gx.at4(a, ch, 2 * y, 2 * xx) += v;
            gx.at4(a, ch, 2 * y, 2 * xx + 1) += v;
            gx.at4(a, ch, 2 * y + 1, 2 * xx) += v;
            gx.at4(a, ch, 2 * y + 1, 2 * xx + 1) += v;
          }
    accumulate(px, gx);
  }));
}

// Nearest-neighbour 2x upsampling of [F, C, H, W].
inline Var upsample2(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("upsample2: rank != 4");
  Index f = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3];
  Tensor out({f, c, h * 2, w * 2});
  for (Index a = 0; a < f; ++a)
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < 2 * h; ++y)
        for (Index xx = 0; xx < 2 * w; ++xx)
          out.at4(a, ch, y, xx) = xv.at4(a, ch, y / 2, xx / 2);
  auto px = x.node();
  return Var(detail::make_op(std::move(out), {px}, [px, f, c, h, w](const Tensor& g) {
    Tensor gx = Tensor::zeros(px->value.shape);
    for (Index a = 0; a < f; ++a)
      for (Index ch = 0; ch < c; ++ch)
        for (Index y = 0; y < 2 * h; ++y)
          for (Index xx = 0; xx < 2 * w; ++xx)
            gx.at4(a, ch, y / 2, xx / 2) += g.at4(a, ch, y, xx);
    accumulate(px, gx);
  }));
}

// Broadcast a per-channel vector [C] over [F, C, H, W].
inline Var add_channel_bias(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || b.value().size() != xv.shape[1])
    throw ShapeError("add_channel_bias");
  Index f = xv.shape[0], c = xv.shape[1], hw = xv.shape[2] * xv.shape[3];
  Tensor out = xv;
  for (Index a = 0; a < f; ++a)
    for (Index ch = 0; ch < c; ++ch)
      out.data.segment(a * c * hw + ch * hw, hw) += b.value().data[ch];
  auto px = x.node(), pb = b.node();
  return Var(detail::make_op(std::move(out), {px, pb},
                             [px, pb, f, c, hw](const Tensor& g) {
    accumulate(px, g);
    Tensor gb = Tensor::zeros({c});
    for (Index a = 0; a < f; ++a)
      for (Index ch = 0; ch < c; ++ch)
        gb.data[ch] += g.data.segment(a * c * hw + ch * hw, hw).sum();
    accumulate(pb, gb);
  }));
}

}  // namespace ag
}  // namespace vlogger
