#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "shillforge/graphdata/graph.hpp"
#include "shillforge/numkernel/tensor.hpp"

namespace shillforge::eval {

enum class UserType { inherent_normal, inherent_fake, injected_fake, injected_normal };
inline constexpr std::size_t kUserTypes = 4;

/// "I", "II", "III", "IV".
std::string_view type_name(UserType t);

/// Inherent users map to I/II by label; round(tau * |injected|) injected users drawn
/// uniformly become III, the rest IV.
std::vector<UserType> assign_user_types(const graph::RatingGraph& g,
                                        std::span<const std::size_t> injected, double tau,
                                        std::uint64_t seed);

/// Labels as the defender observes them: III fake, IV normal, inherent users unchanged.
graph::RatingGraph apply_types(const graph::RatingGraph& g, std::span<const UserType> types);

/// The graph without Type III users and their edges.
graph::RatingGraph remove_anomaly_defense(const graph::RatingGraph& g,
                                          std::span<const UserType> types);

/// Share of `users` whose top-k list contains `item`. Lists rank the items a user has not
/// rated in `train` by score (row per user of `scores`), ties by ascending item index.
double hit_ratio(const nk::Tensor& scores, const graph::RatingGraph& train,
                 std::span<const std::size_t> users, std::size_t item, std::size_t k);

/// hit_ratio for every (k, target) pair, indexed [k][target].
std::vector<std::vector<double>> hit_ratios(const nk::Tensor& scores,
                                            const graph::RatingGraph& train,
                                            std::span<const std::size_t> users,
                                            std::span<const std::size_t> targets,
                                            std::span<const std::size_t> ks);

/// Root mean squared error of `scores` on the given edges; 0 for no edges.
double rmse(const nk::Tensor& scores, std::span<const graph::Edge> edges);

}  // namespace shillforge::eval
