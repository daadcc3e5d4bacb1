#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace shillforge::graph {

/// Input data broke a documented rule (rating range, label consistency, ids...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class UserLabel { normal, fake, injected_unlabeled };

std::string_view to_string(UserLabel label);
std::optional<UserLabel> parse_label(std::string_view text);

struct Edge {
  std::size_t user;
  std::size_t item;
  int rating;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Weighted bipartite user-item graph with integer ratings in [1, L].
/// Immutable once constructed; the constructor enforces the invariants.
class RatingGraph {
 public:
  RatingGraph() = default;
  RatingGraph(std::vector<std::string> user_ids, std::vector<UserLabel> labels,
              std::vector<std::string> item_ids, std::vector<Edge> edges, int levels = 5);

  std::size_t num_users() const noexcept { return user_ids_.size(); }
  std::size_t num_items() const noexcept { return item_ids_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  int levels() const noexcept { return levels_; }
  bool empty() const noexcept { return user_ids_.empty() && item_ids_.empty(); }

  const std::string& user_id(std::size_t u) const { return user_ids_.at(u); }
  const std::string& item_id(std::size_t v) const { return item_ids_.at(v); }
  UserLabel label(std::size_t u) const { return labels_.at(u); }
  const std::vector<std::string>& user_ids() const noexcept { return user_ids_; }
  const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }
  const std::vector<UserLabel>& labels() const noexcept { return labels_; }

  std::span<const Edge> edges() const noexcept { return edges_; }
  /// Indices into edges() for one user / one item, in edge order.
  std::span<const std::size_t> user_edges(std::size_t u) const { return user_adj_.at(u); }
  std::span<const std::size_t> item_edges(std::size_t v) const { return item_adj_.at(v); }
  std::size_t user_degree(std::size_t u) const { return user_adj_.at(u).size(); }
  std::size_t item_degree(std::size_t v) const { return item_adj_.at(v).size(); }

  std::optional<std::size_t> find_user(std::string_view id) const;
  std::optional<std::size_t> find_item(std::string_view id) const;
  std::optional<int> rating(std::size_t u, std::size_t v) const;

 private:
  std::vector<std::string> user_ids_;
  std::vector<UserLabel> labels_;
  std::vector<std::string> item_ids_;
  std::vector<Edge> edges_;
  int levels_ = 5;
  std::vector<std::vector<std::size_t>> user_adj_;
  std::vector<std::vector<std::size_t>> item_adj_;
  std::unordered_map<std::string, std::size_t> user_index_;
  std::unordered_map<std::string, std::size_t> item_index_;
};

/// Keeps the flagged users/items (re-indexed in original order) and the edges between them.
RatingGraph subgraph(const RatingGraph& g, const std::vector<bool>& keep_user,
                     const std::vector<bool>& keep_item);

/// Appends users with their edges. Edge user indices are relative to the new block.
RatingGraph add_users(const RatingGraph& g, std::span<const std::string> ids,
                      std::span<const UserLabel> labels, std::span<const Edge> block_edges);

/// Same graph with replaced per-user labels.
RatingGraph relabel(const RatingGraph& g, std::vector<UserLabel> labels);

}  // namespace shillforge::graph
