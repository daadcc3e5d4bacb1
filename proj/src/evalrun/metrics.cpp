#include "shillforge/evalrun/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace shillforge::eval {

std::string_view type_name(UserType t) {
  switch (t) {
    case UserType::inherent_normal: return "I";
    case UserType::inherent_fake: return "II";
    case UserType::injected_fake: return "III";
    case UserType::injected_normal: return "IV";
  }
  return "?";
}

std::vector<UserType> assign_user_types(const graph::RatingGraph& g,
                                        std::span<const std::size_t> injected, double tau,
                                        std::uint64_t seed) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw nk::ContractViolation("assign_user_types: tau must lie in [0,1]");
  std::vector<UserType> types(g.num_users());
  for (std::size_t u = 0; u < g.num_users(); ++u)
    types[u] = g.label(u) == graph::UserLabel::fake ? UserType::inherent_fake : UserType::inherent_normal;
  std::vector<std::size_t> pool(injected.begin(), injected.end());
  for (std::size_t u : pool) {
    if (u >= g.num_users()) throw nk::ContractViolation("assign_user_types: injected index out of range");
    types[u] = UserType::injected_normal;
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto n3 = static_cast<std::size_t>(std::llround(tau * static_cast<double>(pool.size())));
  for (std::size_t i = 0; i < n3; ++i) types[pool[i]] = UserType::injected_fake;
  return types;
}

graph::RatingGraph apply_types(const graph::RatingGraph& g, std::span<const UserType> types) {
  if (types.size() != g.num_users()) throw nk::ContractViolation("apply_types: one type per user required");
  std::vector<graph::UserLabel> labels = g.labels();
  for (std::size_t u = 0; u < types.size(); ++u) {
    if (types[u] == UserType::injected_fake) labels[u] = graph::UserLabel::fake;
    if (types[u] == UserType::injected_normal) labels[u] = graph::UserLabel::normal;
  }
  return graph::relabel(g, std::move(labels));
}

graph::RatingGraph remove_anomaly_defense(const graph::RatingGraph& g,
                                          std::span<const UserType> types) {
  if (types.size() != g.num_users())
    throw nk::ContractViolation("remove_anomaly_defense: one type per user required");
  std::vector<bool> keep_user(g.num_users()), keep_item(g.num_items(), true);
  for (std::size_t u = 0; u < types.size(); ++u) keep_user[u] = types[u] != UserType::injected_fake;
  return graph::subgraph(g, keep_user, keep_item);
}

namespace {

void check_scores(const nk::Tensor& scores, const graph::RatingGraph& train) {
  if (scores.rank() != 2 || scores.rows() < train.num_users() || scores.cols() != train.num_items())
    throw nk::ContractViolation("hit_ratio: score matrix does not match the graph");
}

/// Whether `item` is in the user's top-k among unrated items.
bool in_top_k(const nk::Tensor& scores, const graph::RatingGraph& train,
              const std::vector<char>& rated, std::size_t u, std::size_t item, std::size_t k) {
  if (rated[item]) return false;
  const double s = scores.at(u, item);
  std::size_t ahead = 0;
  for (std::size_t v = 0; v < train.num_items() && ahead < k; ++v) {
    if (v == item || rated[v]) continue;
    const double sv = scores.at(u, v);
    if (sv > s || (sv == s && v < item)) ++ahead;
  }
  return ahead < k;
}

std::vector<char> rated_mask(const graph::RatingGraph& train, std::size_t u) {
  std::vector<char> rated(train.num_items(), 0);
  for (std::size_t e : train.user_edges(u)) rated[train.edges()[e].item] = 1;
  return rated;
}

}  // namespace

double hit_ratio(const nk::Tensor& scores, const graph::RatingGraph& train,
                 std::span<const std::size_t> users, std::size_t item, std::size_t k) {
  const std::vector<std::size_t> targets{item}, ks{k};
  return hit_ratios(scores, train, users, targets, ks)[0][0];
}

std::vector<std::vector<double>> hit_ratios(const nk::Tensor& scores,
                                            const graph::RatingGraph& train,
                                            std::span<const std::size_t> users,
                                            std::span<const std::size_t> targets,
                                            std::span<const std::size_t> ks) {
  check_scores(scores, train);
  for (std::size_t k : ks)
    if (k == 0) throw nk::ContractViolation("hit_ratio: k must be positive");
  for (std::size_t t : targets)
    if (t >= train.num_items()) throw nk::ContractViolation("hit_ratio: item index out of range");
  if (users.empty()) throw nk::ContractViolation("hit_ratio: no users");
  std::vector<std::vector<double>> hits(ks.size(), std::vector<double>(targets.size(), 0.0));
  for (std::size_t u : users) {
    const std::vector<char> rated = rated_mask(train, u);
    for (std::size_t ki = 0; ki < ks.size(); ++ki)
      for (std::size_t ti = 0; ti < targets.size(); ++ti)
        if (in_top_k(scores, train, rated, u, targets[ti], ks[ki])) hits[ki][ti] += 1.0;
  }
  for (auto& row : hits)
    for (double& h : row) h /= static_cast<double>(users.size());
  return hits;
}

double rmse(const nk::Tensor& scores, std::span<const graph::Edge> edges) {
  if (edges.empty()) return 0.0;
  double ss = 0.0;
  for (const graph::Edge& e : edges) {
    const double d = scores.at(e.user, e.item) - e.rating;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(edges.size()));
}

}  // namespace shillforge::eval
