#include "gdc/tensor.hpp"

#include <sstream>

namespace gdc {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index element_count(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + to_string(shape));
    n *= d;
  }
  return n;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape)
    : shape_(std::move(shape)), values_(Array::Zero(element_count(shape_))) {}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (element_count(shape_) != values_.size()) {
    throw ShapeError("tensor shape " + to_string(shape_) + " does not match " +
                     std::to_string(values_.size()) + " values");
  }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(Shape shape, Scalar value) {
  Tensor t(std::move(shape));
  t.values_.setConstant(value);
  return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_values(Shape shape, std::initializer_list<Scalar> values) {
  Array a(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) a[i++] = v;
  return Tensor(std::move(shape), std::move(a));
}

template <typename Scalar>
typename Tensor<Scalar>::MatrixMap Tensor<Scalar>::matrix() {
  const Index rows = shape_.empty() ? 1 : shape_[0];
  return MatrixMap(values_.data(), rows, rows == 0 ? 0 : values_.size() / rows);
}

template <typename Scalar>
typename Tensor<Scalar>::ConstMatrixMap Tensor<Scalar>::matrix() const {
  const Index rows = shape_.empty() ? 1 : shape_[0];
  return ConstMatrixMap(values_.data(), rows, rows == 0 ? 0 : values_.size() / rows);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), values_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace gdc
