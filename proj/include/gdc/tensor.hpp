#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdc {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Raised when operand shapes or configuration values violate an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward op produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on malformed external input (weight files, PNG, JSON records).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_string(const Shape& shape);
Index element_count(const Shape& shape);

/// Dense row-major tensor templated on its scalar type.
///
/// Feature maps are rank 3 (channels, height, width) and convolution kernels
/// rank 4 (out, in, kh, kw). Storage is a contiguous Eigen array; `matrix()`
/// exposes it as a dim(0) x (size / dim(0)) row-major matrix so channel mixing
/// is a plain matrix product.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Array values);

  static Tensor constant(Shape shape, Scalar value);
  static Tensor from_values(Shape shape, std::initializer_list<Scalar> values);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return values_.size(); }
  bool empty() const { return values_.size() == 0; }

  // rank-3 conveniences
  Index channels() const { return dim(0); }
  Index height() const { return dim(1); }
  Index width() const { return dim(2); }

  Array& array() { return values_; }
  const Array& array() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }
  std::span<Scalar> values() { return {values_.data(), static_cast<std::size_t>(values_.size())}; }
  std::span<const Scalar> values() const {
    return {values_.data(), static_cast<std::size_t>(values_.size())};
  }

  MatrixMap matrix();
  ConstMatrixMap matrix() const;

  Scalar& operator()(Index c, Index y, Index x) { return values_[(c * dim(1) + y) * dim(2) + x]; }
  Scalar operator()(Index c, Index y, Index x) const {
    return values_[(c * dim(1) + y) * dim(2) + x];
  }
  Scalar& operator()(Index o, Index i, Index y, Index x) {
    return values_[((o * dim(1) + i) * dim(2) + y) * dim(3) + x];
  }
  Scalar operator()(Index o, Index i, Index y, Index x) const {
    return values_[((o * dim(1) + i) * dim(2) + y) * dim(3) + x];
  }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const { return values_.allFinite(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

 private:
  Shape shape_;
  Array values_;
};

template <typename Scalar>
bool same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return a.shape() == b.shape();
}

/// Throws NumericError naming `op` if `t` holds a non-finite value.
template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value in output");
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gdc
