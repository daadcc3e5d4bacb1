#include "shillforge/graphdata/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <unordered_map>

namespace shillforge::graph {

RatingGraph prune_min_degree(const RatingGraph& g, std::size_t min_records) {
  if (min_records < 1) throw ValidationError("prune_min_degree: min_records must be >= 1");
  const std::size_t nu = g.num_users();
  std::vector<std::size_t> deg_u(nu), deg_v(g.num_items());
  for (std::size_t u = 0; u < nu; ++u) deg_u[u] = g.user_degree(u);
  for (std::size_t v = 0; v < g.num_items(); ++v) deg_v[v] = g.item_degree(v);
  std::vector<bool> alive_u(nu, true), alive_v(g.num_items(), true), edge_alive(g.num_edges(), true);

  // Queue entries: node index, users first (< nu) then items (>= nu).
  std::deque<std::size_t> queue;
  for (std::size_t u = 0; u < nu; ++u)
    if (deg_u[u] < min_records) queue.push_back(u);
  for (std::size_t v = 0; v < g.num_items(); ++v)
    if (deg_v[v] < min_records) queue.push_back(nu + v);

  auto edges = g.edges();
  while (!queue.empty()) {
    const std::size_t node = queue.front();
    queue.pop_front();
    const bool is_user = node < nu;
    const std::size_t idx = is_user ? node : node - nu;
    if (is_user ? !alive_u[idx] : !alive_v[idx]) continue;
    (is_user ? alive_u : alive_v)[idx] = false;
    auto incident = is_user ? g.user_edges(idx) : g.item_edges(idx);
    for (std::size_t e : incident) {
      if (!edge_alive[e]) continue;
      edge_alive[e] = false;
      if (is_user) {
        const std::size_t v = edges[e].item;
        if (alive_v[v] && --deg_v[v] < min_records) queue.push_back(nu + v);
      } else {
        const std::size_t u = edges[e].user;
        if (alive_u[u] && --deg_u[u] < min_records) queue.push_back(u);
      }
    }
  }
  return subgraph(g, alive_u, alive_v);
}

DatasetSplit split(const RatingGraph& g, double test_frac, std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) {
    throw ValidationError("split: test_frac must lie strictly between 0 and 1");
  }
  std::vector<std::size_t> normal_edges;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    if (g.label(g.edges()[e].user) == UserLabel::normal) normal_edges.push_back(e);
  }
  if (normal_edges.empty()) throw ValidationError("split: graph has no edges from normal users");

  const auto n_test =
      static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(normal_edges.size())));
  std::mt19937_64 rng(seed);
  std::shuffle(normal_edges.begin(), normal_edges.end(), rng);
  std::vector<bool> held(g.num_edges(), false);
  for (std::size_t i = 0; i < n_test; ++i) held[normal_edges[i]] = true;

  DatasetSplit out;
  std::vector<Edge> train_edges;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    (held[e] ? out.test : train_edges).push_back(g.edges()[e]);
  }
  out.train = RatingGraph(g.user_ids(), g.labels(), g.item_ids(), std::move(train_edges), g.levels());
  return out;
}

RatingGraph reindex_items(const RatingGraph& g, std::span<const std::string> item_ids) {
  std::unordered_map<std::string_view, std::size_t> position;
  for (std::size_t i = 0; i < item_ids.size(); ++i)
    if (!position.emplace(item_ids[i], i).second)
      throw ValidationError("reindex_items: duplicate item id '" + item_ids[i] + "'");
  std::vector<Edge> edges(g.edges().begin(), g.edges().end());
  for (Edge& e : edges) {
    const auto it = position.find(g.item_id(e.item));
    if (it == position.end())
      throw ValidationError("reindex_items: item '" + g.item_id(e.item) + "' is not in the id list");
    e.item = it->second;
  }
  return RatingGraph(g.user_ids(), g.labels(), {item_ids.begin(), item_ids.end()}, std::move(edges),
                     g.levels());
}

std::vector<std::size_t> candidate_items(const RatingGraph& g, std::span<const std::size_t> targets,
                                         std::size_t hops) {
  std::vector<bool> item_seen(g.num_items(), false), user_seen(g.num_users(), false);
  std::vector<std::size_t> frontier;
  for (std::size_t t : targets) {
    if (t >= g.num_items()) {
      throw ValidationError("candidate_items: unknown target index " + std::to_string(t));
    }
    if (!item_seen[t]) frontier.push_back(t);
    item_seen[t] = true;
  }
  bool at_items = true;
  for (std::size_t step = 0; step < hops && !frontier.empty(); ++step) {
    std::vector<std::size_t> next;
    for (std::size_t node : frontier) {
      auto incident = at_items ? g.item_edges(node) : g.user_edges(node);
      for (std::size_t e : incident) {
        const Edge& edge = g.edges()[e];
        if (at_items) {
          if (!user_seen[edge.user]) {
            user_seen[edge.user] = true;
            next.push_back(edge.user);
          }
        } else if (!item_seen[edge.item]) {
          item_seen[edge.item] = true;
          next.push_back(edge.item);
        }
      }
    }
    frontier = std::move(next);
    at_items = !at_items;
  }
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < g.num_items(); ++v)
    if (item_seen[v]) out.push_back(v);
  return out;
}

std::vector<UserStats> user_stats(const RatingGraph& g) {
  std::vector<UserStats> stats(g.num_users());
  for (std::size_t u = 0; u < g.num_users(); ++u) {
    auto incident = g.user_edges(u);
    if (incident.empty()) continue;
    const double n = static_cast<double>(incident.size());
    double s = 0.0, s2 = 0.0, top = 0.0, bottom = 0.0;
    for (std::size_t e : incident) {
      const double r = g.edges()[e].rating;
      s += r;
      s2 += r * r;
      top += g.edges()[e].rating == g.levels() ? 1.0 : 0.0;
      bottom += g.edges()[e].rating == 1 ? 1.0 : 0.0;
    }
    UserStats& st = stats[u];
    st.degree = n;
    st.mean = s / n;
    st.variance = std::max(0.0, s2 / n - st.mean * st.mean);
    st.frac_max = top / n;
    st.frac_min = bottom / n;
  }
  return stats;
}

nk::Tensor scale_features(std::span<const UserStats> stats) {
  const std::size_t n = stats.size();
  nk::Tensor raw({n, kFeatureDim});
  for (std::size_t u = 0; u < n; ++u) {
    const UserStats& s = stats[u];
    const double row[kFeatureDim] = {s.degree, s.mean, s.variance, s.frac_max, s.frac_min};
    for (std::size_t j = 0; j < kFeatureDim; ++j) raw.at(u, j) = row[j];
  }
  if (n == 0) return raw;
  for (std::size_t j = 0; j < kFeatureDim; ++j) {
    double lo = raw.at(0, j), hi = raw.at(0, j);
    for (std::size_t u = 1; u < n; ++u) {
      lo = std::min(lo, raw.at(u, j));
      hi = std::max(hi, raw.at(u, j));
    }
    const double span = hi - lo;
    for (std::size_t u = 0; u < n; ++u) raw.at(u, j) = span > 0.0 ? (raw.at(u, j) - lo) / span : 0.0;
  }
  return raw;
}

nk::Tensor user_features(const RatingGraph& g) {
  auto stats = user_stats(g);
  return scale_features(stats);
}

}  // namespace shillforge::graph
