#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "shillforge/graphdata/graph.hpp"
#include "shillforge/numkernel/tensor.hpp"

namespace shillforge::graph {

/// Repeatedly drops users and items with fewer than `min_records` edges until
/// every survivor meets the bound. The result is the unique fixed point, so it
/// does not depend on peeling order.
RatingGraph prune_min_degree(const RatingGraph& g, std::size_t min_records = 2);

struct DatasetSplit {
  RatingGraph train;  // same users and items as the input, minus the held-out edges
  std::vector<Edge> test;
};

/// Holds out round(test_frac * #edges-of-normal-users) edges of normal users,
/// sampled uniformly without replacement.
DatasetSplit split(const RatingGraph& g, double test_frac, std::uint64_t seed);

/// The same graph with items indexed in `item_ids` order. Ids the graph lacks become
/// edgeless items; a graph item missing from `item_ids` is a ValidationError.
RatingGraph reindex_items(const RatingGraph& g, std::span<const std::string> item_ids);

/// Items within `hops` bipartite steps of any target (item -> user -> item is two
/// steps), always including the targets. Sorted ascending.
std::vector<std::size_t> candidate_items(const RatingGraph& g, std::span<const std::size_t> targets,
                                         std::size_t hops = 2);

/// Behavioral summary of one user's ratings, before population scaling.
struct UserStats {
  double degree = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double frac_max = 0.0;  // share of ratings equal to L
  double frac_min = 0.0;  // share of ratings equal to 1
};
inline constexpr std::size_t kFeatureDim = 5;

std::vector<UserStats> user_stats(const RatingGraph& g);

/// Min-max scales each statistic over the population; a constant column maps to 0.
nk::Tensor scale_features(std::span<const UserStats> stats);

/// [degree, mean, variance, frac==L, frac==1] per user, each scaled to [0,1].
nk::Tensor user_features(const RatingGraph& g);

}  // namespace shillforge::graph
