#include "shillforge/numkernel/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace shillforge::nk {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, Tensor x,
                                  double eps) {
  if (!(eps > 0.0)) throw ContractViolation("finite_difference_gradient: eps must be positive");
  Tensor grad = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = f(x);
    x[i] = orig - eps;
    const double down = f(x);
    x[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape()) {
    throw ContractViolation("max_relative_error: shape mismatch " + to_string(a.shape()) + " vs " +
                            to_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace shillforge::nk
