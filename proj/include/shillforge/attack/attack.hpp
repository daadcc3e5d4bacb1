#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shillforge/graphdata/graph.hpp"
#include "shillforge/recmodel/model.hpp"

namespace shillforge::attack {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Relaxed ratings of `n_fake` users over `candidates`; row k * |candidates| + c.
struct RatingTensor {
  std::size_t n_fake = 0;
  std::vector<std::size_t> candidates;
  nk::Tensor values;  // [n_fake * |candidates|, L]

  int levels() const { return static_cast<int>(values.cols()); }
};

/// Uniform 1/L rows plus seeded noise in [-0.01, 0.01], re-normalized.
RatingTensor init_tensor(std::size_t n_fake, std::vector<std::size_t> candidates, int levels,
                         std::uint64_t seed);

/// -sum_{t in targets} sum_{rows u} log softmax(scores[u, :])[t] for scores [users, items].
nk::Var adv_loss(nk::Var scores, std::span<const std::size_t> targets);

enum class MinMaxScope { global, per_row };

/// Clip to [0,1], min-max rescale (whole tensor or per row), then divide each row by its
/// sum. A flat tensor (or flat row under per_row) becomes uniform 1/L.
nk::Tensor project_normalize(const nk::Tensor& values, MinMaxScope scope = MinMaxScope::global);

/// Everything the relaxed surrogate needs, shared by the gradient helpers.
struct AttackProblem {
  graph::RatingGraph graph;                 // clean graph plus edgeless injected users
  std::vector<std::size_t> fake_users;      // indices of the injected users in `graph`
  std::vector<std::size_t> candidates;
  std::vector<std::size_t> targets;
  std::vector<std::size_t> victims;         // users whose rankings the attacker optimizes
  double edge_weight = 1.0;
  rec::GraphIndex index;

  rec::Relaxation relaxation(const nk::Tensor& values) const;
  nk::Tensor features(const nk::Tensor& values) const;
};

struct AdvGradient {
  double loss = 0.0;
  nk::Tensor grad;  // same shape as the tensor values
};

/// adv_loss and its gradient in the relaxed tensor at fixed parameters. Features of the
/// injected users are held constant at `features`.
AdvGradient adv_gradient(const rec::RecParams& params, const AttackProblem& problem,
                         const nk::Tensor& features, const nk::Tensor& values);

/// Sum of fixed-parameter gradients over the trajectory.
nk::Tensor meta_gradient(std::span<const rec::RecParams> trajectory, const AttackProblem& problem,
                         const nk::Tensor& features, const nk::Tensor& values);

struct AttackConfig {
  std::size_t n_fake = 5;
  std::size_t budget = 15;
  std::vector<std::size_t> targets;
  std::size_t k1 = 100;
  std::size_t k2 = 1;
  std::size_t epochs = 50;
  double lr_inner = 0.2;
  double lr_outer = 1e-4;
  std::size_t candidate_threshold = 500;  // use 2-hop candidates above this many items
  std::size_t hops = 2;
  MinMaxScope scope = MinMaxScope::global;
  bool force_targets = false;
  // Surrogate recommender.
  std::size_t dim = 16;
  std::size_t hidden = 16;
  std::size_t detector_hidden = 16;
  double lambda = 1.0;
  std::uint64_t seed = 1;

  void validate(const graph::RatingGraph& g) const;
};

/// Appends `n_fake` edgeless users labeled injected-unlabeled and picks candidates and
/// victims (users labeled normal).
/// Default number of injected users: 1% of |U|, at least one.
std::size_t default_fake_count(std::size_t n_users);

AttackProblem make_problem(const graph::RatingGraph& clean, const AttackConfig& cfg);

struct MetacResult {
  RatingTensor tensor;
  std::vector<double> adv_loss_log;  // per epoch, at the last trajectory point
  double initial_tensor_loss = 0.0;  // adv_loss of the initial tensor at the final parameters
  double final_tensor_loss = 0.0;    // adv_loss of the returned tensor at the final parameters
  bool diverged = false;             // tensor is then the last finite one
  std::string message;
};

/// Alternating optimization: per epoch, k1 parameter checkpoints (k1 - 1 surrogate
/// steps), then k2 projected meta-gradient steps on the tensor.
MetacResult metac_optimize(const AttackProblem& problem, const AttackConfig& cfg);

struct InjectedProfile {
  std::vector<std::pair<std::size_t, int>> ratings;  // (item index, rating)
};

/// Per user: argmax level per candidate (first maximum), then the top-B candidates by
/// that probability, ties by ascending item index. With `force_targets` the targets are
/// rated L first and fill the budget before confidence-ranked items.
std::vector<InjectedProfile> discretize(const RatingTensor& tensor, std::size_t budget,
                                        std::span<const std::size_t> force_targets = {},
                                        std::vector<std::string>* warnings = nullptr);

struct BaselineConfig {
  std::size_t n_fake = 5;
  std::size_t budget = 15;
  std::vector<std::size_t> targets;
  double popular_share = 0.3;
  std::uint64_t seed = 1;
};

std::vector<InjectedProfile> random_attack(const graph::RatingGraph& g, const BaselineConfig& cfg);
std::vector<InjectedProfile> average_attack(const graph::RatingGraph& g, const BaselineConfig& cfg);
std::vector<InjectedProfile> popular_attack(const graph::RatingGraph& g, const BaselineConfig& cfg);

/// Ids "inj0001", ... skipping any already used in `g`.
std::vector<std::string> fake_user_ids(const graph::RatingGraph& g, std::size_t n);

/// Appends the profiles as users labeled injected-unlabeled.
graph::RatingGraph inject(const graph::RatingGraph& g, std::span<const std::string> ids,
                          std::span<const InjectedProfile> profiles);

/// CSV `fake_user_id,item_id,rating`.
void write_profiles(std::ostream& out, const graph::RatingGraph& g,
                    std::span<const std::string> ids, std::span<const InjectedProfile> profiles);

struct LoadedProfiles {
  std::vector<std::string> ids;
  std::vector<InjectedProfile> profiles;
};
LoadedProfiles read_profiles(std::istream& in, const graph::RatingGraph& g);
LoadedProfiles load_profiles(const std::filesystem::path& path, const graph::RatingGraph& g);

}  // namespace shillforge::attack
