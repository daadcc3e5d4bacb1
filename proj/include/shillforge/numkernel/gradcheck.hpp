#pragma once

#include <functional>

#include "shillforge/numkernel/tensor.hpp"

namespace shillforge::nk {

/// Central-difference estimate of df/dx, one coordinate at a time:
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, Tensor x,
                                  double eps = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps near-zero
/// coordinates from dominating the ratio.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace shillforge::nk
