#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shillforge/attack/attack.hpp"
#include "shillforge/detect/trainer.hpp"
#include "shillforge/evalrun/metrics.hpp"
#include "shillforge/graphdata/synthetic.hpp"

namespace shillforge::eval {

enum class AttackKind { none, metac, random, average, popular };
enum class DefenseKind { none, pdr, remove_anomaly, adv_training };

std::string_view to_string(AttackKind k);
std::string_view to_string(DefenseKind k);
std::optional<AttackKind> parse_attack(std::string_view s);
std::optional<DefenseKind> parse_defense(std::string_view s);

struct ExperimentConfig {
  // Data.
  std::optional<std::filesystem::path> dataset;  // CSV; synthetic data when empty
  graph::SyntheticSpec synthetic;
  std::size_t min_records = 2;
  double test_frac = 0.1;
  // Experiment.
  AttackKind attack = AttackKind::metac;
  DefenseKind defense = DefenseKind::none;
  double tau = 0.3;
  std::vector<std::size_t> ks{10, 50};
  double power = 0.01;  // injected users as a share of |U|
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t n_targets = 5;
  bool target_degree_filter = true;  // sample targets among items with degree >= median
  // Recommender and training.
  std::size_t dim = 16;
  std::size_t hidden = 16;
  detect::TrainConfig train;  // mode and seed are set per run
  double holdout_frac = 0.1;
  // Attack; n_fake, targets, seed and layer sizes are set per run.
  attack::AttackConfig attack_cfg;
  double popular_share = 0.3;

  /// Throws ContractViolation naming the first invalid field.
  void validate() const;
};

/// Mean q(fake) of each user type per epoch; NaN when a type has no users.
using TypeCurves = std::array<std::vector<double>, kUserTypes>;

struct SeedReport {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<std::string> targets;
  std::size_t injected = 0;
  std::array<std::size_t, kUserTypes> type_counts{};
  std::vector<std::vector<double>> hr_pre;   // [k][target]
  std::vector<std::vector<double>> hr_post;  // [k][target]
  double rmse_pre = 0.0;
  double rmse_post = 0.0;
  std::vector<double> auc;       // per retraining epoch
  std::vector<double> adv_loss;  // MetaC outer epochs
  std::optional<std::size_t> trigger_epoch;
  TypeCurves type_q_fake;
  // Raw per-user trajectories of the retraining run.
  std::vector<std::vector<double>> q_fake;
  std::vector<std::string> user_ids;
  std::vector<std::string> user_types;
  // Artifacts to recompute the post-attack metrics: the clean training split, the
  // injected profiles present at retraining, and the retrained model.
  std::optional<graph::RatingGraph> train_graph;
  std::vector<std::string> injected_ids;
  std::vector<attack::InjectedProfile> profiles;
  std::optional<rec::RecParams> model;

  /// Mean over targets of hr_pre / hr_post at the k index.
  double mean_hr_pre(std::size_t k_index) const;
  double mean_hr_post(std::size_t k_index) const;
};

struct Stat {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
};
Stat summarize(std::span<const double> xs);

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<SeedReport> seeds;
  std::size_t succeeded() const;
};

/// Loads or synthesizes the dataset and prunes it.
graph::RatingGraph prepare_dataset(const ExperimentConfig& cfg);

/// Items with degree >= the median degree (all items when `filter` is off), `n` drawn
/// uniformly, returned sorted.
std::vector<std::size_t> sample_targets(const graph::RatingGraph& g, std::size_t n, bool filter,
                                        std::uint64_t seed);

/// A trained model with its score matrix and training log.
struct Fit {
  nk::Tensor scores;
  detect::TrainResult result;
  rec::RecParams params;
};

/// The training graph after an attack, before user types are assigned.
struct Injection {
  graph::RatingGraph graph;
  std::vector<std::size_t> injected;  // user indices in `graph`
  std::vector<double> adv_loss;
  std::vector<std::string> ids;
  std::vector<attack::InjectedProfile> profiles;
};

/// Memoizes the defense-independent stages of one seed: the clean fit per training mode
/// and the injection per attack. Share one cache only among configs that differ in
/// `attack` and `defense`.
struct SeedCache {
  std::map<std::pair<detect::Mode, bool>, Fit> clean;
  std::map<AttackKind, Injection> injections;
};

/// Full pipeline for one seed. Stage failures are captured in the report.
SeedReport run_seed(const ExperimentConfig& cfg, const graph::RatingGraph& dataset,
                    std::uint64_t seed, SeedCache* cache = nullptr);

/// Hit ratios of a saved model on `train` plus the injected profiles, over the users
/// labeled normal in `train`; indexed [k][target].
std::vector<std::vector<double>> recompute_hit_ratios(const graph::RatingGraph& train,
                                                      std::span<const std::string> injected_ids,
                                                      std::span<const attack::InjectedProfile> profiles,
                                                      const rec::RecParams& model,
                                                      std::span<const std::size_t> targets,
                                                      std::span<const std::size_t> ks);

/// Every configured seed, at most `jobs` at a time. Throws when no seed succeeds.
ExperimentReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1);

}  // namespace shillforge::eval
