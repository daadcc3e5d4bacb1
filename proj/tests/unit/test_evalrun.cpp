#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "shillforge/evalrun/config.hpp"
#include "shillforge/evalrun/experiment.hpp"
#include "shillforge/evalrun/metrics.hpp"
#include "shillforge/evalrun/report.hpp"
#include "shillforge/graphdata/synthetic.hpp"
#include "test_util.hpp"

using namespace shillforge;
using namespace shillforge::eval;
using nk::Tensor;

namespace {

/// Full sort of every unrated item, then a membership test on the first k.
double hit_ratio_oracle(const Tensor& scores, const graph::RatingGraph& g,
                        const std::vector<std::size_t>& users, std::size_t item, std::size_t k) {
  if (users.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t u : users) {
    if (g.rating(u, item)) continue;
    std::vector<std::size_t> list;
    for (std::size_t v = 0; v < g.num_items(); ++v)
      if (!g.rating(u, v)) list.push_back(v);
    std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      if (scores.at(u, a) != scores.at(u, b)) return scores.at(u, a) > scores.at(u, b);
      return a < b;
    });
    list.resize(std::min(k, list.size()));
    if (std::find(list.begin(), list.end(), item) != list.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(users.size());
}

graph::RatingGraph random_graph(std::size_t users, std::size_t items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(0.3);
  std::uniform_int_distribution<int> rating(1, 5);
  std::vector<std::string> uid, iid;
  for (std::size_t u = 0; u < users; ++u) uid.push_back("u" + std::to_string(u));
  for (std::size_t v = 0; v < items; ++v) iid.push_back("i" + std::to_string(v));
  std::vector<graph::Edge> edges;
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t v = 0; v < items; ++v)
      if (keep(rng)) edges.push_back({u, v, rating(rng)});
  return graph::RatingGraph(uid, std::vector<graph::UserLabel>(users, graph::UserLabel::normal), iid,
                            edges, 5);
}

/// Scores on a coarse grid so that ties are common.
Tensor tied_scores(std::size_t users, std::size_t items, std::uint64_t seed) {
  Tensor t = testing::random_tensor({users, items}, seed, 1.0, 5.0);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::round(t[i] * 2.0) / 2.0;
  return t;
}

graph::RatingGraph with_injected(std::size_t n_inherent, std::size_t n_fake, std::size_t n_injected) {
  std::vector<std::string> ids;
  std::vector<graph::UserLabel> labels;
  std::vector<graph::Edge> edges;
  for (std::size_t u = 0; u < n_inherent + n_injected; ++u) {
    ids.push_back("u" + std::to_string(u));
    labels.push_back(u >= n_inherent                  ? graph::UserLabel::injected_unlabeled
                     : u < n_fake                     ? graph::UserLabel::fake
                                                      : graph::UserLabel::normal);
    edges.push_back({u, u % 3, 1 + static_cast<int>(u % 5)});
    edges.push_back({u, 3, 4});
  }
  return graph::RatingGraph(ids, labels, {"a", "b", "c", "d"}, edges, 5);
}

std::vector<std::size_t> range(std::size_t from, std::size_t to) {
  std::vector<std::size_t> out(to - from);
  std::iota(out.begin(), out.end(), from);
  return out;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.synthetic.n_users = 60;
  cfg.synthetic.n_items = 20;
  cfg.synthetic.n_fake = 3;
  cfg.ks = {2, 5};
  cfg.power = 0.05;
  cfg.seeds = {1, 2};
  cfg.n_targets = 2;
  cfg.dim = 4;
  cfg.hidden = 4;
  cfg.train.epochs = 3;
  cfg.train.steps_per_epoch = 2;
  cfg.train.detector_hidden = 4;
  cfg.attack_cfg.k1 = 2;
  cfg.attack_cfg.epochs = 2;
  cfg.attack_cfg.budget = 5;
  return cfg;
}

}  // namespace

TEST_CASE("hit_ratio: matches a full-sort oracle on random graphs") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t n_users = 20 + (seed * 37) % 181;
    const std::size_t n_items = 5 + seed % 11;
    const graph::RatingGraph g = random_graph(n_users, n_items, seed);
    const Tensor scores = tied_scores(n_users, n_items, seed + 100);
    const std::vector<std::size_t> users = range(0, n_users);
    CAPTURE(seed);
    for (std::size_t item = 0; item < n_items; ++item)
      for (std::size_t k : {1u, 3u, 10u})
        CHECK(hit_ratio(scores, g, users, item, k) == hit_ratio_oracle(scores, g, users, item, k));
  }
}

TEST_CASE("hit_ratio: worked examples") {
  // Two users, three items, no ratings: item 0 tops user 0's list only.
  const graph::RatingGraph g({"a", "b"}, {graph::UserLabel::normal, graph::UserLabel::normal},
                             {"x", "y", "z"}, {}, 5);
  Tensor scores({2, 3});
  scores.at(0, 0) = 3.0, scores.at(0, 1) = 2.0, scores.at(0, 2) = 1.0;
  scores.at(1, 0) = 1.0, scores.at(1, 1) = 3.0, scores.at(1, 2) = 2.0;
  const std::vector<std::size_t> users{0, 1};
  CHECK(hit_ratio(scores, g, users, 0, 1) == 0.5);
  CHECK(hit_ratio(scores, g, users, 1, 1) == 0.5);
  CHECK(hit_ratio(scores, g, users, 2, 1) == 0.0);
  CHECK(hit_ratio(scores, g, users, 2, 2) == 0.5);
  CHECK(hit_ratio(scores, g, users, 2, 3) == 1.0);

  SUBCASE("ties go to the lower item index") {
    Tensor flat({2, 3}, 1.0);
    CHECK(hit_ratio(flat, g, users, 0, 1) == 1.0);
    CHECK(hit_ratio(flat, g, users, 1, 1) == 0.0);
  }
  SUBCASE("a rated target is a miss and rated items leave the list") {
    const graph::RatingGraph rated({"a", "b"}, {graph::UserLabel::normal, graph::UserLabel::normal},
                                   {"x", "y", "z"}, {{0, 0, 5}}, 5);
    CHECK(hit_ratio(scores, rated, users, 0, 3) == 0.5);  // user 0 rated it
    CHECK(hit_ratio(scores, rated, users, 1, 1) == 1.0);  // user 0's list starts at y
  }
}

TEST_CASE("hit_ratio: monotone in k and bounded") {
  const graph::RatingGraph g = random_graph(50, 12, 7);
  const Tensor scores = tied_scores(50, 12, 8);
  const std::vector<std::size_t> users = range(0, 50);
  for (std::size_t item = 0; item < 12; ++item) {
    double prev = 0.0;
    for (std::size_t k = 1; k <= 12; ++k) {
      const double h = hit_ratio(scores, g, users, item, k);
      CHECK(h >= prev);
      CHECK(h <= 1.0);
      prev = h;
    }
    // With k covering every item only the users who rated it miss.
    std::size_t raters = 0;
    for (std::size_t u : users) raters += g.rating(u, item).has_value();
    CHECK(prev == doctest::Approx(1.0 - static_cast<double>(raters) / 50.0));
  }
}

TEST_CASE("hit_ratios: indexed by k then target") {
  const graph::RatingGraph g = random_graph(30, 8, 3);
  const Tensor scores = tied_scores(30, 8, 4);
  const std::vector<std::size_t> users = range(0, 30), targets{6, 1}, ks{1, 4, 8};
  const auto table = hit_ratios(scores, g, users, targets, ks);
  REQUIRE(table.size() == ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    REQUIRE(table[i].size() == targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t)
      CHECK(table[i][t] == hit_ratio(scores, g, users, targets[t], ks[i]));
  }
}

TEST_CASE("rmse: worked example and empty edges") {
  Tensor scores({1, 2});
  scores.at(0, 0) = 4.0, scores.at(0, 1) = 2.0;
  const std::vector<graph::Edge> edges{{0, 0, 5}, {0, 1, 5}};
  CHECK(rmse(scores, edges) == doctest::Approx(std::sqrt(5.0)));
  CHECK(rmse(scores, {}) == 0.0);
}

TEST_CASE("assign_user_types: counts, partition and determinism") {
  const graph::RatingGraph g = with_injected(8, 2, 10);
  const std::vector<std::size_t> injected = range(8, 18);

  const auto types = assign_user_types(g, injected, 0.3, 5);
  REQUIRE(types.size() == 18);
  std::array<std::size_t, kUserTypes> counts{};
  for (UserType t : types) ++counts[static_cast<std::size_t>(t)];
  CHECK(counts == std::array<std::size_t, kUserTypes>{6, 2, 3, 7});
  for (std::size_t u = 0; u < 8; ++u)
    CHECK(types[u] == (u < 2 ? UserType::inherent_fake : UserType::inherent_normal));
  CHECK(assign_user_types(g, injected, 0.3, 5) == types);

  const auto all = assign_user_types(g, injected, 1.0, 5);
  CHECK(std::count(all.begin(), all.end(), UserType::injected_fake) == 10);
  const auto none = assign_user_types(g, injected, 0.0, 5);
  CHECK(std::count(none.begin(), none.end(), UserType::injected_normal) == 10);

  std::set<std::vector<UserType>> draws;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) draws.insert(assign_user_types(g, injected, 0.3, seed));
  CHECK(draws.size() > 1);

  CHECK(type_name(UserType::inherent_normal) == "I");
  CHECK(type_name(UserType::injected_normal) == "IV");
}

TEST_CASE("apply_types and remove_anomaly_defense") {
  const graph::RatingGraph g = with_injected(8, 2, 10);
  const auto types = assign_user_types(g, range(8, 18), 0.3, 2);

  const graph::RatingGraph observed = apply_types(g, types);
  for (std::size_t u = 0; u < g.num_users(); ++u) {
    const bool fake = types[u] == UserType::inherent_fake || types[u] == UserType::injected_fake;
    CHECK(observed.label(u) == (fake ? graph::UserLabel::fake : graph::UserLabel::normal));
  }
  CHECK(observed.num_edges() == g.num_edges());

  const graph::RatingGraph pruned = remove_anomaly_defense(observed, types);
  std::size_t kept_users = 0, kept_edges = 0;
  for (std::size_t u = 0; u < g.num_users(); ++u) {
    if (types[u] == UserType::injected_fake) continue;
    ++kept_users;
    kept_edges += g.user_degree(u);
    CHECK(pruned.find_user(g.user_id(u)).has_value());
  }
  CHECK(pruned.num_users() == kept_users);
  CHECK(pruned.num_edges() == kept_edges);
  CHECK(pruned.num_items() == g.num_items());
}

TEST_CASE("config: format_config and read_config round-trip") {
  ExperimentConfig cfg;
  cfg.tau = 0.125;
  cfg.ks = {5, 20};
  cfg.seeds = {7, 3};
  cfg.attack = AttackKind::popular;
  cfg.defense = DefenseKind::pdr;
  cfg.train.lr = 0.1 + 0.2;  // not exactly representable in short decimal
  cfg.attack_cfg.scope = attack::MinMaxScope::per_row;
  cfg.dataset = "data/ratings.csv";

  std::istringstream in(format_config(cfg));
  ExperimentConfig back;
  read_config(in, back);
  CHECK(settings(back) == settings(cfg));
  CHECK(back.train.lr == cfg.train.lr);
  CHECK(back.dataset == cfg.dataset);
}

TEST_CASE("config: keys, comments and errors") {
  ExperimentConfig cfg;
  apply_setting(cfg, "tau", "0.5");
  apply_setting(cfg, "experiment.ks", "1, 2,3");
  apply_setting(cfg, "train.epochs", "7");
  apply_setting(cfg, "attack.epochs", "9");
  CHECK(cfg.tau == 0.5);
  CHECK(cfg.ks == std::vector<std::size_t>{1, 2, 3});
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.attack_cfg.epochs == 9);

  auto keys_of = [](auto&& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      return e.keys();
    }
    return std::vector<std::string>{};
  };
  CHECK(keys_of([&] { apply_setting(cfg, "epochs", "3"); }) == std::vector<std::string>{"epochs"});
  CHECK(keys_of([&] { apply_setting(cfg, "nope", "3"); }) == std::vector<std::string>{"nope"});
  CHECK(keys_of([&] { apply_setting(cfg, "tau", "abc"); }) == std::vector<std::string>{"experiment.tau"});
  CHECK(keys_of([&] { apply_setting(cfg, "attack.minmax", "sideways"); }) ==
        std::vector<std::string>{"attack.minmax"});

  std::istringstream text(
      "# comment\n[experiment]\ntau = 0.25  \nbogus = 1\n\n[train]\nlr = \"0.5\"\nepochs = x\n");
  ExperimentConfig parsed;
  const auto bad = keys_of([&] { read_config(text, parsed); });
  CHECK(bad == std::vector<std::string>{"experiment.bogus", "train.epochs"});
}

TEST_CASE("summarize: mean and sample standard deviation") {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const Stat s = summarize(xs);
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  const std::vector<double> one{4.0};
  CHECK(summarize(one).sd == 0.0);
}

TEST_CASE("sample_targets: distinct, sorted, above the median degree") {
  graph::SyntheticSpec spec;
  spec.n_users = 200;
  spec.n_items = 40;
  const graph::RatingGraph g = graph::synthesize(spec);
  std::vector<std::size_t> degrees;
  for (std::size_t v = 0; v < g.num_items(); ++v) degrees.push_back(g.item_degree(v));
  std::sort(degrees.begin(), degrees.end());
  const double median = (degrees[19] + degrees[20]) / 2.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t = sample_targets(g, 5, true, seed);
    REQUIRE(t.size() == 5);
    CHECK(std::is_sorted(t.begin(), t.end()));
    CHECK(std::adjacent_find(t.begin(), t.end()) == t.end());
    for (std::size_t v : t) CHECK(static_cast<double>(g.item_degree(v)) >= median);
    CHECK(sample_targets(g, 5, true, seed) == t);
  }
}

TEST_CASE("run_seed: no attack leaves the metrics unchanged") {
  ExperimentConfig cfg = tiny_config();
  cfg.attack = AttackKind::none;
  const graph::RatingGraph data = prepare_dataset(cfg);
  const SeedReport r = run_seed(cfg, data, 1);
  REQUIRE_MESSAGE(r.ok, r.error);
  CHECK(r.injected == 0);
  CHECK(r.hr_pre == r.hr_post);
  CHECK(r.rmse_pre == r.rmse_post);
}

TEST_CASE("run_seed: trajectories, types and saved artifacts") {
  for (AttackKind attack : {AttackKind::metac, AttackKind::random}) {
    for (DefenseKind defense : {DefenseKind::none, DefenseKind::pdr, DefenseKind::remove_anomaly}) {
      ExperimentConfig cfg = tiny_config();
      cfg.attack = attack;
      cfg.defense = defense;
      cfg.tau = 0.5;
      const graph::RatingGraph data = prepare_dataset(cfg);
      const SeedReport r = run_seed(cfg, data, 2);
      CAPTURE(to_string(attack));
      CAPTURE(to_string(defense));
      REQUIRE_MESSAGE(r.ok, r.error);
      CHECK(r.injected == 3);

      REQUIRE(r.q_fake.size() == cfg.train.epochs);
      CHECK(r.auc.size() == cfg.train.epochs);
      const std::size_t n_users = r.user_ids.size();
      CHECK(r.user_types.size() == n_users);
      for (const auto& epoch : r.q_fake) CHECK(epoch.size() == n_users);
      CHECK(std::set<std::string>(r.user_ids.begin(), r.user_ids.end()).size() == n_users);
      CHECK(std::accumulate(r.type_counts.begin(), r.type_counts.end(), std::size_t{0}) == n_users);
      const std::size_t removed = defense == DefenseKind::remove_anomaly ? 2 : 0;  // round(0.5 * 3)
      CHECK(r.type_counts[2] == 2 - removed);
      CHECK(r.profiles.size() == 3 - removed);
      for (const auto& curve : r.type_q_fake) CHECK(curve.size() == cfg.train.epochs);
      if (attack == AttackKind::metac) CHECK(r.adv_loss.size() == cfg.attack_cfg.epochs);

      REQUIRE(r.train_graph);
      REQUIRE(r.model);
      std::vector<std::size_t> targets;
      for (const std::string& id : r.targets) targets.push_back(*r.train_graph->find_item(id));
      CHECK(recompute_hit_ratios(*r.train_graph, r.injected_ids, r.profiles, *r.model, targets,
                                 cfg.ks) == r.hr_post);
    }
  }
}

TEST_CASE("run_seed: a shared cache reproduces independent runs") {
  const ExperimentConfig base = tiny_config();
  const graph::RatingGraph data = prepare_dataset(base);
  SeedCache cache;
  for (AttackKind attack : {AttackKind::metac, AttackKind::average}) {
    for (DefenseKind defense : {DefenseKind::none, DefenseKind::pdr}) {
      ExperimentConfig cfg = base;
      cfg.attack = attack;
      cfg.defense = defense;
      ExperimentReport a{cfg, {run_seed(cfg, data, 1, &cache)}};
      ExperimentReport b{cfg, {run_seed(cfg, data, 1)}};
      CHECK(report_json(a) == report_json(b));
    }
  }
  CHECK(cache.clean.size() == 2);
  CHECK(cache.injections.size() == 2);
}

TEST_CASE("run_experiment: deterministic report and consistent summary") {
  const ExperimentConfig cfg = tiny_config();
  const std::string first = report_json(run_experiment(cfg));
  CHECK(report_json(run_experiment(cfg, 2)) == first);

  // Re-running from the written manifest reproduces the same bytes.
  ExperimentConfig replay;
  std::istringstream manifest(manifest_text(cfg, "report.json"));
  read_config(manifest, replay);
  CHECK(report_json(run_experiment(replay)) == first);

  const auto j = nlohmann::json::parse(first);
  CHECK(j["schema"] == "report-v1");
  REQUIRE(j["seeds"].size() == 2);
  for (const char* k : {"2", "5"}) {
    std::vector<double> means;
    for (const auto& s : j["seeds"]) means.push_back(s["hr_post"][k]["mean"].get<double>());
    const Stat stat = summarize(means);
    CHECK(j["summary"]["hr_post"][k]["mean"].get<double>() == doctest::Approx(stat.mean).epsilon(1e-5));
    CHECK(j["summary"]["hr_post"][k]["sd"].get<double>() == doctest::Approx(stat.sd).epsilon(1e-5));
  }
  CHECK(j["summary"]["seeds_ok"] == 2);
}

TEST_CASE("run_experiment: failures are captured per seed") {
  ExperimentConfig cfg = tiny_config();
  cfg.attack = AttackKind::random;
  cfg.attack_cfg.budget = 500;  // more ratings than items
  CHECK_THROWS_AS(run_experiment(cfg), std::runtime_error);
  const SeedReport r = run_seed(cfg, prepare_dataset(cfg), 1);
  CHECK_FALSE(r.ok);
  CHECK_FALSE(r.error.empty());
}
