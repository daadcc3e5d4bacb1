#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "shillforge/graphdata/graph.hpp"

namespace shillforge::graph {

struct SyntheticSpec {
  std::size_t n_users = 500;  // includes the inherent fake users
  std::size_t n_items = 100;
  std::size_t n_fake = 25;
  double density = 6.0;             // expected edges per user, >= 2
  std::vector<double> rating_bias;  // per-item latent mean; drawn from the seed when empty
  int levels = 5;
  std::uint64_t seed = 1;

  /// Throws ValidationError describing the first broken constraint.
  void validate() const;
};

/// Low-rank planted ratings: clamp(round(b_i + taste_u . factor_i + noise), 1, L) for
/// normal users, uniform items and ratings for fake users. Items are picked with
/// lognormal popularity. Ids are zero-padded ("u0007", "i012").
RatingGraph synthesize(const SyntheticSpec& spec);

}  // namespace shillforge::graph
