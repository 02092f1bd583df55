#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "vlogger/errors.hpp"
#include "vlogger/rng.hpp"

namespace vlogger {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense n-d array: flat row-major storage plus a shape. Matrix views via
// Eigen::Map keep all heavy lifting inside Eigen.
template <typename Scalar>
struct TensorT {
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixRM =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapMat = Eigen::Map<MatrixRM>;
  using ConstMapMat = Eigen::Map<const MatrixRM>;
  using MapVec = Eigen::Map<Storage>;
  using ConstMapVec = Eigen::Map<const Storage>;

  Shape shape;
  Storage data;

  TensorT() = default;
  explicit TensorT(Shape s) : shape(std::move(s)) {
    data = Storage::Zero(shape_size(shape));
  }

  static TensorT zeros(Shape s) { return TensorT(std::move(s)); }

  static TensorT full(Shape s, Scalar v) {
    TensorT t(std::move(s));
    t.data.setConstant(v);
    return t;
  }

  static TensorT randn(Shape s, Rng& rng, Scalar stddev = Scalar(1)) {
    TensorT t(std::move(s));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Index i = 0; i < t.data.size(); ++i)
      t.data[i] = Scalar(dist(rng)) * stddev;
    return t;
  }

  static TensorT from_values(Shape s, std::initializer_list<Scalar> vals) {
    TensorT t(std::move(s));
    if (Index(vals.size()) != t.size())
      throw ShapeError("from_values: size mismatch");
    Index i = 0;
    for (Scalar v : vals) t.data[i++] = v;
    return t;
  }

  Index size() const { return data.size(); }
  int rank() const { return int(shape.size()); }
  Index dim(int i) const { return shape.at(std::size_t(i)); }

  Scalar& operator[](Index i) { return data[i]; }
  Scalar operator[](Index i) const { return data[i]; }

  // 4-d accessors for the [F x C x H x W] layout used throughout.
  Scalar& at4(Index a, Index b, Index c, Index d) {
    return data[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
  Scalar at4(Index a, Index b, Index c, Index d) const {
    return data[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
  Scalar& at2(Index r, Index c) { return data[r * shape[1] + c]; }
  Scalar at2(Index r, Index c) const { return data[r * shape[1] + c]; }

  TensorT reshaped(Shape s) const {
    if (shape_size(s) != size())
      throw ShapeError("reshape " + shape_str(shape) + " -> " + shape_str(s));
    TensorT t = *this;
    t.shape = std::move(s);
    return t;
  }

  MapMat mat(Index rows, Index cols) {
    if (rows * cols != size()) throw ShapeError("mat view: size mismatch");
    return MapMat(data.data(), rows, cols);
  }
  ConstMapMat mat(Index rows, Index cols) const {
    if (rows * cols != size()) throw ShapeError("mat view: size mismatch");
    return ConstMapMat(data.data(), rows, cols);
  }
  // Rank-2 tensors viewed with their own shape.
  MapMat mat() { return mat(shape.at(0), Index(size() / shape.at(0))); }
  ConstMapMat mat() const { return mat(shape.at(0), Index(size() / shape.at(0))); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (Index i = 0; i < size(); ++i)
      if (!std::isfinite(double(data[i]))) return false;
    return true;
  }

  TensorT& operator+=(const TensorT& o) {
    if (!same_shape(o)) throw ShapeError("+=: shape mismatch");
    data += o.data;
    return *this;
  }

  Scalar max_abs() const { return size() ? data.abs().maxCoeff() : Scalar(0); }
};

using Tensor = TensorT<double>;

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch " +
                     shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace vlogger
