#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace shillforge::nk {

using Shape = std::vector<std::size_t>;

/// Raised when a primitive receives operands whose shapes do not conform,
/// or when an API precondition is broken.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a primitive is evaluated outside its mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles. Rank 0 (shape `{}`) holds one scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);
  static Tensor zeros_like(const Tensor& other);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim(std::size_t axis) const;

  // Rank-2 accessors; they throw ContractViolation on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  const double& operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }

  /// Value of a single-element tensor.
  double item() const;
  bool all_finite() const;

  /// Same values under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace shillforge::nk
