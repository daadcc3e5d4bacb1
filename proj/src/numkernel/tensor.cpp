#include "shillforge/numkernel/tensor.hpp"

#include <cmath>
#include <sstream>

namespace shillforge::nk {

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

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size()) {
    throw ContractViolation("Tensor: shape " + to_string(shape_) + " does not hold " +
                            std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape()); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ContractViolation("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                            to_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ContractViolation("Tensor::rows: rank-2 required, got " + to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ContractViolation("Tensor::cols: rank-2 required, got " + to_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ContractViolation("Tensor::item: single element required, got " + to_string(shape_));
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw ContractViolation("Tensor::reshaped: " + to_string(shape_) + " -> " + to_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

}  // namespace shillforge::nk
