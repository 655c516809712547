#ifndef IFRP_TENSOR_HPP
#define IFRP_TENSOR_HPP

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ifrp {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  Index n = 0, c = 0, h = 0, w = 0;

  Index size() const { return n * c * h * w; }
  Index sample_size() const { return c * h * w; }
  Index plane() const { return h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

// Dense NCHW batch. Storage is a flat Eigen column vector so that whole-tensor
// arithmetic can be written as Eigen expressions on vec().
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Vector<Scalar>::Zero(shape.size())) {}
  Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape{n, c, h, w}) {}

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(shape);
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar& operator()(Index n, Index c, Index y, Index x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar operator()(Index n, Index c, Index y, Index x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar* sample_data(Index n) { return data_.data() + n * shape_.sample_size(); }
  const Scalar* sample_data(Index n) const { return data_.data() + n * shape_.sample_size(); }

  Vector<Scalar>& vec() { return data_; }
  const Vector<Scalar>& vec() const { return data_; }

  // Sample n viewed as a C x (H*W) row-major matrix.
  MatrixMap sample(Index n) { return MatrixMap(sample_data(n), shape_.c, shape_.plane()); }
  ConstMatrixMap sample(Index n) const {
    return ConstMatrixMap(sample_data(n), shape_.c, shape_.plane());
  }

  // Whole batch viewed as N x (C*H*W).
  MatrixMap rows() { return MatrixMap(data_.data(), shape_.n, shape_.sample_size()); }
  ConstMatrixMap rows() const {
    return ConstMatrixMap(data_.data(), shape_.n, shape_.sample_size());
  }

  void set_zero() { data_.setZero(); }

  Tensor reshaped(Shape shape) const {
    if (shape.size() != shape_.size()) {
      throw ShapeError("reshape " + shape_.str() + " -> " + shape.str());
    }
    Tensor t;
    t.shape_ = shape;
    t.data_ = data_;
    return t;
  }

  // Copy of samples [first, first + count).
  Tensor slice(Index first, Index count) const {
    Tensor t(Shape{count, shape_.c, shape_.h, shape_.w});
    t.data_ = data_.segment(first * shape_.sample_size(), count * shape_.sample_size());
    return t;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t(shape_);
    t.vec() = data_.template cast<Other>();
    return t;
  }

 private:
  Shape shape_{};
  Vector<Scalar> data_;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

template <typename Scalar>
Tensor<Scalar> concat_batch(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.c != sb.c || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_batch: " + sa.str() + " vs " + sb.str());
  }
  Tensor<Scalar> out(Shape{sa.n + sb.n, sa.c, sa.h, sa.w});
  out.vec() << a.vec(), b.vec();
  return out;
}

}  // namespace ifrp

#endif  // IFRP_TENSOR_HPP
