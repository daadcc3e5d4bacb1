#include "shillforge/graphdata/graph.hpp"

#include <unordered_set>

namespace shillforge::graph {

std::string_view to_string(UserLabel label) {
  switch (label) {
    case UserLabel::normal:
      return "normal";
    case UserLabel::fake:
      return "fake";
    case UserLabel::injected_unlabeled:
      return "injected";
  }
  return "unknown";
}

std::optional<UserLabel> parse_label(std::string_view text) {
  if (text == "normal") return UserLabel::normal;
  if (text == "fake") return UserLabel::fake;
  if (text == "injected") return UserLabel::injected_unlabeled;
  return std::nullopt;
}

RatingGraph::RatingGraph(std::vector<std::string> user_ids, std::vector<UserLabel> labels,
                         std::vector<std::string> item_ids, std::vector<Edge> edges, int levels)
    : user_ids_(std::move(user_ids)),
      labels_(std::move(labels)),
      item_ids_(std::move(item_ids)),
      edges_(std::move(edges)),
      levels_(levels) {
  if (levels_ < 2) throw ValidationError("RatingGraph: need at least 2 rating levels");
  if (labels_.size() != user_ids_.size()) {
    throw ValidationError("RatingGraph: " + std::to_string(labels_.size()) + " labels for " +
                          std::to_string(user_ids_.size()) + " users");
  }
  for (std::size_t u = 0; u < user_ids_.size(); ++u) {
    if (!user_index_.emplace(user_ids_[u], u).second) {
      throw ValidationError("RatingGraph: duplicate user id '" + user_ids_[u] + "'");
    }
  }
  for (std::size_t v = 0; v < item_ids_.size(); ++v) {
    if (!item_index_.emplace(item_ids_[v], v).second) {
      throw ValidationError("RatingGraph: duplicate item id '" + item_ids_[v] + "'");
    }
  }
  user_adj_.resize(user_ids_.size());
  item_adj_.resize(item_ids_.size());
  std::unordered_set<std::size_t> seen;
  seen.reserve(edges_.size() * 2);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& edge = edges_[e];
    if (edge.user >= user_ids_.size() || edge.item >= item_ids_.size()) {
      throw ValidationError("RatingGraph: edge " + std::to_string(e) + " references a missing node");
    }
    if (edge.rating < 1 || edge.rating > levels_) {
      throw ValidationError("RatingGraph: rating " + std::to_string(edge.rating) +
                            " outside [1," + std::to_string(levels_) + "]");
    }
    if (!seen.insert(edge.user * item_ids_.size() + edge.item).second) {
      throw ValidationError("RatingGraph: duplicate edge (" + user_ids_[edge.user] + ", " +
                            item_ids_[edge.item] + ")");
    }
    user_adj_[edge.user].push_back(e);
    item_adj_[edge.item].push_back(e);
  }
}

std::optional<std::size_t> RatingGraph::find_user(std::string_view id) const {
  auto it = user_index_.find(std::string(id));
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> RatingGraph::find_item(std::string_view id) const {
  auto it = item_index_.find(std::string(id));
  if (it == item_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> RatingGraph::rating(std::size_t u, std::size_t v) const {
  for (std::size_t e : user_adj_.at(u)) {
    if (edges_[e].item == v) return edges_[e].rating;
  }
  return std::nullopt;
}

RatingGraph subgraph(const RatingGraph& g, const std::vector<bool>& keep_user,
                     const std::vector<bool>& keep_item) {
  constexpr std::size_t dropped = static_cast<std::size_t>(-1);
  std::vector<std::size_t> user_map(g.num_users(), dropped), item_map(g.num_items(), dropped);
  std::vector<std::string> users, items;
  std::vector<UserLabel> labels;
  for (std::size_t u = 0; u < g.num_users(); ++u) {
    if (!keep_user[u]) continue;
    user_map[u] = users.size();
    users.push_back(g.user_id(u));
    labels.push_back(g.label(u));
  }
  for (std::size_t v = 0; v < g.num_items(); ++v) {
    if (!keep_item[v]) continue;
    item_map[v] = items.size();
    items.push_back(g.item_id(v));
  }
  std::vector<Edge> edges;
  for (const Edge& e : g.edges()) {
    if (user_map[e.user] == dropped || item_map[e.item] == dropped) continue;
    edges.push_back({user_map[e.user], item_map[e.item], e.rating});
  }
  return RatingGraph(std::move(users), std::move(labels), std::move(items), std::move(edges),
                     g.levels());
}

RatingGraph add_users(const RatingGraph& g, std::span<const std::string> ids,
                      std::span<const UserLabel> labels, std::span<const Edge> block_edges) {
  std::vector<std::string> users = g.user_ids();
  std::vector<UserLabel> all_labels = g.labels();
  users.insert(users.end(), ids.begin(), ids.end());
  all_labels.insert(all_labels.end(), labels.begin(), labels.end());
  std::vector<Edge> edges(g.edges().begin(), g.edges().end());
  for (const Edge& e : block_edges) edges.push_back({g.num_users() + e.user, e.item, e.rating});
  return RatingGraph(std::move(users), std::move(all_labels), g.item_ids(), std::move(edges),
                     g.levels());
}

RatingGraph relabel(const RatingGraph& g, std::vector<UserLabel> labels) {
  return RatingGraph(g.user_ids(), std::move(labels), g.item_ids(),
                     std::vector<Edge>(g.edges().begin(), g.edges().end()), g.levels());
}

}  // namespace shillforge::graph
