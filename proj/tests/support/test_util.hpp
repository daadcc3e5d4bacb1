#pragma once

#include <cstdint>
#include <random>

#include "shillforge/numkernel/tensor.hpp"

namespace shillforge::testing {

inline nk::Tensor random_tensor(nk::Shape shape, std::uint64_t seed, double lo = -2.0,
                                double hi = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  nk::Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace shillforge::testing
