#include "shillforge/evalrun/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "shillforge/graphdata/io.hpp"
#include "shillforge/graphdata/preprocess.hpp"

namespace shillforge::eval {

using nk::Tensor;

std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::metac: return "metac";
    case AttackKind::random: return "random";
    case AttackKind::average: return "average";
    case AttackKind::popular: return "popular";
  }
  return "?";
}

std::string_view to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::pdr: return "pdr";
    case DefenseKind::remove_anomaly: return "remove_anomaly";
    case DefenseKind::adv_training: return "adv_training";
  }
  return "?";
}

std::optional<AttackKind> parse_attack(std::string_view s) {
  for (AttackKind k : {AttackKind::none, AttackKind::metac, AttackKind::random, AttackKind::average,
                       AttackKind::popular})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<DefenseKind> parse_defense(std::string_view s) {
  for (DefenseKind k : {DefenseKind::none, DefenseKind::pdr, DefenseKind::remove_anomaly,
                        DefenseKind::adv_training})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw nk::ContractViolation("config: " + what); };
  if (!dataset) {
    try {
      synthetic.validate();
    } catch (const graph::ValidationError& e) {
      fail(e.what());
    }
  }
  if (!(test_frac > 0.0 && test_frac < 1.0)) fail("test_frac must lie in (0,1)");
  if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must lie in [0,1]");
  if (ks.empty()) fail("ks must not be empty");
  for (std::size_t k : ks)
    if (k == 0) fail("every k must be positive");
  if (attack != AttackKind::none && !(power > 0.0 && power <= 1.0)) fail("power must lie in (0,1]");
  if (seeds.empty()) fail("seeds must not be empty");
  if (n_targets == 0) fail("targets must be positive");
  if (dim == 0 || hidden == 0 || train.detector_hidden == 0) fail("layer sizes must be positive");
  if (train.epochs == 0 || train.steps_per_epoch == 0) fail("training epochs and steps must be positive");
  if (!(train.lr > 0.0)) fail("lr must be positive");
  if (!(train.lambda >= 0.0)) fail("lambda must be non-negative");
  if (!(holdout_frac >= 0.0 && holdout_frac < 1.0)) fail("holdout_frac must lie in [0,1)");
  if (!(popular_share >= 0.0 && popular_share <= 1.0)) fail("popular_share must lie in [0,1]");
  if (attack_cfg.budget == 0) fail("budget must be positive");
  if (attack_cfg.k1 == 0 || attack_cfg.k2 == 0) fail("k1 and k2 must be positive");
  if (!(attack_cfg.lr_inner >= 0.0 && attack_cfg.lr_outer >= 0.0))
    fail("attack learning rates must be non-negative");
  train.defense.validate();
}

double SeedReport::mean_hr_pre(std::size_t k_index) const {
  const auto& row = hr_pre.at(k_index);
  return std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
}

double SeedReport::mean_hr_post(std::size_t k_index) const {
  const auto& row = hr_post.at(k_index);
  return std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
}

Stat summarize(std::span<const double> xs) {
  Stat s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return s;
}

std::size_t ExperimentReport::succeeded() const {
  return static_cast<std::size_t>(
      std::count_if(seeds.begin(), seeds.end(), [](const SeedReport& s) { return s.ok; }));
}

graph::RatingGraph prepare_dataset(const ExperimentConfig& cfg) {
  graph::RatingGraph g = cfg.dataset ? graph::load_csv(*cfg.dataset, cfg.synthetic.levels).graph
                                     : graph::synthesize(cfg.synthetic);
  return graph::prune_min_degree(g, cfg.min_records);
}

std::vector<std::size_t> sample_targets(const graph::RatingGraph& g, std::size_t n, bool filter,
                                        std::uint64_t seed) {
  std::vector<std::size_t> pool(g.num_items());
  std::iota(pool.begin(), pool.end(), 0);
  if (filter && !pool.empty()) {
    std::vector<std::size_t> deg(g.num_items());
    for (std::size_t v = 0; v < g.num_items(); ++v) deg[v] = g.item_degree(v);
    std::vector<std::size_t> sorted = deg;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n_items = sorted.size();
    // Median of the degree list; the mean of the two middle values for even counts.
    const double median = n_items % 2 == 1
                              ? static_cast<double>(sorted[n_items / 2])
                              : 0.5 * static_cast<double>(sorted[n_items / 2 - 1] + sorted[n_items / 2]);
    std::erase_if(pool, [&](std::size_t v) { return static_cast<double>(deg[v]) < median; });
  }
  if (pool.size() < n)
    throw graph::ValidationError("only " + std::to_string(pool.size()) + " eligible target items for " +
                                 std::to_string(n) + " targets");
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

namespace {

/// Independent stream per pipeline stage.
std::uint64_t derive(std::uint64_t seed, std::uint64_t stage) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stage * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum Stage : std::uint64_t { kSplit = 1, kTargets, kInit, kTrain, kAttack, kTypes, kHoldout };

std::vector<std::size_t> observed_labels(const graph::RatingGraph& g) {
  std::vector<std::size_t> labels(g.num_users());
  for (std::size_t u = 0; u < g.num_users(); ++u)
    labels[u] = g.label(u) == graph::UserLabel::fake ? detect::kFake : detect::kNormal;
  return labels;
}

detect::TrainConfig train_config(const ExperimentConfig& cfg) {
  detect::TrainConfig tc = cfg.train;
  tc.mode = cfg.defense == DefenseKind::pdr ? detect::Mode::pdr : detect::Mode::graphrfi;
  tc.adversarial = cfg.defense == DefenseKind::adv_training;
  return tc;
}

Fit fit(const ExperimentConfig& cfg, const graph::RatingGraph& g, std::uint64_t seed) {
  detect::TrainConfig tc = train_config(cfg);
  tc.seed = derive(seed, kTrain);
  const rec::GraphIndex index = rec::build_index(g);
  const Tensor x = rec::model_features(g);
  detect::TrainData data{&index, &x, observed_labels(g), {}};
  std::vector<std::size_t> pool(g.num_users());
  std::iota(pool.begin(), pool.end(), 0);
  data.holdout = detect::stratified_holdout(pool, data.labels, cfg.holdout_frac, derive(seed, kHoldout));
  rec::RecParams params = rec::init_params(cfg.dim, cfg.hidden, graph::kFeatureDim, g.num_items(),
                                           g.levels(), derive(seed, kInit));
  Fit out;
  out.result = detect::train(params, data, tc);
  out.scores = rec::predict_all(params, index, x);
  out.params = std::move(params);
  return out;
}

std::vector<std::size_t> type_one_users(const graph::RatingGraph& g) {
  std::vector<std::size_t> users;
  for (std::size_t u = 0; u < g.num_users(); ++u)
    if (g.label(u) == graph::UserLabel::normal) users.push_back(u);
  return users;
}

Injection poison(const ExperimentConfig& cfg, const graph::RatingGraph& train,
                 const std::vector<std::size_t>& targets, std::uint64_t seed) {
  Injection out{train, {}, {}, {}, {}};
  if (cfg.attack == AttackKind::none) return out;
  const auto n_fake = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.power * static_cast<double>(train.num_users()))));
  std::vector<attack::InjectedProfile> profiles;
  if (cfg.attack == AttackKind::metac) {
    attack::AttackConfig ac = cfg.attack_cfg;
    ac.n_fake = n_fake;
    ac.targets = targets;
    ac.seed = derive(seed, kAttack);
    ac.dim = cfg.dim;
    ac.hidden = cfg.hidden;
    ac.detector_hidden = cfg.train.detector_hidden;
    ac.lambda = cfg.train.lambda;
    const attack::AttackProblem problem = attack::make_problem(train, ac);
    attack::MetacResult res = attack::metac_optimize(problem, ac);
    if (res.diverged) throw attack::AttackError(res.message);
    out.adv_loss = res.adv_loss_log;
    const std::span<const std::size_t> forced =
        ac.force_targets ? std::span<const std::size_t>(targets) : std::span<const std::size_t>{};
    profiles = attack::discretize(res.tensor, ac.budget, forced);
  } else {
    attack::BaselineConfig bc;
    bc.n_fake = n_fake;
    bc.budget = cfg.attack_cfg.budget;
    bc.targets = targets;
    bc.popular_share = cfg.popular_share;
    bc.seed = derive(seed, kAttack);
    switch (cfg.attack) {
      case AttackKind::random: profiles = attack::random_attack(train, bc); break;
      case AttackKind::average: profiles = attack::average_attack(train, bc); break;
      default: profiles = attack::popular_attack(train, bc); break;
    }
  }
  out.ids = attack::fake_user_ids(train, profiles.size());
  out.graph = attack::inject(train, out.ids, profiles);
  for (std::size_t k = 0; k < profiles.size(); ++k) out.injected.push_back(train.num_users() + k);
  out.profiles = std::move(profiles);
  return out;
}

TypeCurves type_curves(const std::vector<std::vector<double>>& q_fake,
                       std::span<const UserType> types) {
  TypeCurves curves;
  for (const auto& epoch : q_fake) {
    std::array<double, kUserTypes> sum{};
    std::array<std::size_t, kUserTypes> count{};
    for (std::size_t u = 0; u < types.size(); ++u) {
      const auto t = static_cast<std::size_t>(types[u]);
      sum[t] += epoch[u];
      ++count[t];
    }
    for (std::size_t t = 0; t < kUserTypes; ++t)
      curves[t].push_back(count[t] ? sum[t] / static_cast<double>(count[t])
                                   : std::numeric_limits<double>::quiet_NaN());
  }
  return curves;
}

}  // namespace

SeedReport run_seed(const ExperimentConfig& cfg, const graph::RatingGraph& dataset,
                    std::uint64_t seed, SeedCache* cache) {
  SeedReport rep;
  rep.seed = seed;
  try {
    const graph::DatasetSplit data = graph::split(dataset, cfg.test_frac, derive(seed, kSplit));
    const graph::RatingGraph& train = data.train;
    const std::vector<std::size_t> targets =
        sample_targets(train, cfg.n_targets, cfg.target_degree_filter, derive(seed, kTargets));
    for (std::size_t t : targets) rep.targets.push_back(train.item_id(t));
    const std::vector<std::size_t> victims = type_one_users(train);

    const detect::TrainConfig tc = train_config(cfg);
    const std::pair mode{tc.mode, tc.adversarial};
    std::optional<Fit> own_clean;
    if (cache && !cache->clean.contains(mode)) cache->clean.emplace(mode, fit(cfg, train, seed));
    if (!cache) own_clean = fit(cfg, train, seed);
    const Fit& clean = cache ? cache->clean.at(mode) : *own_clean;
    rep.hr_pre = hit_ratios(clean.scores, train, victims, targets, cfg.ks);
    rep.rmse_pre = rmse(clean.scores, data.test);

    std::optional<Injection> own_inj;
    if (cache && !cache->injections.contains(cfg.attack))
      cache->injections.emplace(cfg.attack, poison(cfg, train, targets, seed));
    if (!cache) own_inj = poison(cfg, train, targets, seed);
    const Injection& inj = cache ? cache->injections.at(cfg.attack) : *own_inj;
    rep.injected = inj.injected.size();
    rep.adv_loss = inj.adv_loss;
    std::vector<UserType> types = assign_user_types(inj.graph, inj.injected, cfg.tau, derive(seed, kTypes));
    graph::RatingGraph observed = apply_types(inj.graph, types);
    for (std::size_t k = 0; k < inj.injected.size(); ++k) {
      if (cfg.defense == DefenseKind::remove_anomaly && types[inj.injected[k]] == UserType::injected_fake)
        continue;
      rep.injected_ids.push_back(inj.ids[k]);
      rep.profiles.push_back(inj.profiles[k]);
    }
    if (cfg.defense == DefenseKind::remove_anomaly) {
      observed = remove_anomaly_defense(observed, types);
      std::erase(types, UserType::injected_fake);
    }
    for (UserType t : types) ++rep.type_counts[static_cast<std::size_t>(t)];

    const Fit post = fit(cfg, observed, seed);
    // Inherent users keep their indices, so Type I users and test edges line up.
    rep.hr_post = hit_ratios(post.scores, train, victims, targets, cfg.ks);
    rep.rmse_post = rmse(post.scores, data.test);
    for (const detect::EpochLog& log : post.result.log) rep.auc.push_back(log.auc);
    rep.trigger_epoch = post.result.trigger_epoch;
    rep.type_q_fake = type_curves(post.result.q_fake, types);
    rep.q_fake = post.result.q_fake;
    rep.user_ids = observed.user_ids();
    for (UserType t : types) rep.user_types.emplace_back(type_name(t));
    rep.train_graph = train;
    rep.model = post.params;
    rep.ok = true;
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.error = e.what();
  }
  return rep;
}

std::vector<std::vector<double>> recompute_hit_ratios(const graph::RatingGraph& train,
                                                      std::span<const std::string> injected_ids,
                                                      std::span<const attack::InjectedProfile> profiles,
                                                      const rec::RecParams& model,
                                                      std::span<const std::size_t> targets,
                                                      std::span<const std::size_t> ks) {
  const graph::RatingGraph g = attack::inject(train, injected_ids, profiles);
  if (model.item_table.rows() != g.num_items() || model.levels() != g.levels())
    throw graph::ValidationError("model does not match the graph");
  const Tensor scores = rec::predict_all(model, rec::build_index(g), rec::model_features(g));
  return hit_ratios(scores, train, type_one_users(train), targets, ks);
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs) {
  cfg.validate();
  const graph::RatingGraph dataset = prepare_dataset(cfg);
  ExperimentReport report;
  report.config = cfg;
  report.seeds.resize(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++)
      report.seeds[i] = run_seed(cfg, dataset, cfg.seeds[i]);
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, cfg.seeds.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (report.succeeded() == 0) {
    std::string msg = "every seed failed";
    if (!report.seeds.empty()) msg += "; first error: " + report.seeds.front().error;
    throw std::runtime_error(msg);
  }
  return report;
}

}  // namespace shillforge::eval
