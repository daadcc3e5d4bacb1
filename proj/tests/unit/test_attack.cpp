#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "shillforge/attack/attack.hpp"
#include "shillforge/graphdata/io.hpp"
#include "shillforge/graphdata/preprocess.hpp"
#include "shillforge/graphdata/synthetic.hpp"
#include "shillforge/numkernel/gradcheck.hpp"
#include "test_util.hpp"

using namespace shillforge;
using namespace shillforge::attack;
using nk::Tape;
using nk::Tensor;
using nk::Var;

namespace {

double adv_loss_value(const Tensor& scores, std::vector<std::size_t> targets) {
  Tape tape;
  return adv_loss(tape.constant(scores), targets).value().item();
}

bool rows_stochastic(const Tensor& t, double tol = 1e-6) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double total = 0.0;
    for (std::size_t l = 0; l < t.cols(); ++l) {
      if (t.at(r, l) < 0.0 || t.at(r, l) > 1.0) return false;
      total += t.at(r, l);
    }
    if (std::abs(total - 1.0) > tol) return false;
  }
  return true;
}

graph::RatingGraph fixture_graph(std::size_t users, std::size_t items, std::uint64_t seed) {
  graph::SyntheticSpec spec;
  spec.n_users = users;
  spec.n_items = items;
  spec.n_fake = std::max<std::size_t>(1, users / 20);
  spec.seed = seed;
  return graph::prune_min_degree(graph::synthesize(spec));
}

AttackConfig small_config(std::uint64_t seed) {
  AttackConfig cfg;
  cfg.n_fake = 2;
  cfg.budget = 4;
  cfg.targets = {0, 3};
  cfg.k1 = 3;
  cfg.epochs = 2;
  cfg.dim = 4;
  cfg.hidden = 3;
  cfg.detector_hidden = 3;
  cfg.seed = seed;
  return cfg;
}

rec::RecParams live_params(const AttackProblem& pr, std::uint64_t seed) {
  rec::RecParams p = rec::init_params(4, 3, graph::kFeatureDim, pr.graph.num_items(),
                                      pr.graph.levels(), seed);
  p.pred_bias = testing::random_tensor({1, 3}, seed + 7, 0.1, 0.5);
  return p;
}

Tensor random_rows(std::size_t rows, std::size_t L, std::uint64_t seed) {
  Tensor t = testing::random_tensor({rows, L}, seed, 0.05, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t l = 0; l < L; ++l) total += t.at(r, l);
    for (std::size_t l = 0; l < L; ++l) t.at(r, l) /= total;
  }
  return t;
}

RatingTensor tensor_from_rows(std::vector<std::size_t> candidates, std::size_t n_fake,
                              std::vector<std::vector<double>> rows) {
  RatingTensor t;
  t.n_fake = n_fake;
  t.candidates = std::move(candidates);
  t.values = Tensor({rows.size(), rows.front().size()});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t l = 0; l < rows[r].size(); ++l) t.values.at(r, l) = rows[r][l];
  return t;
}

}  // namespace

TEST_CASE("init_tensor: near-uniform stochastic rows, deterministic per seed") {
  RatingTensor a = init_tensor(3, {0, 2, 5, 7}, 5, 11), b = init_tensor(3, {0, 2, 5, 7}, 5, 11);
  CHECK(a.values == b.values);
  CHECK(a.values.shape() == nk::Shape{12, 5});
  CHECK(rows_stochastic(a.values, 1e-12));
  // Noise of 0.01 per entry moves a renormalized entry by at most 0.21 / 0.96 - 0.2.
  for (double v : a.values.values()) CHECK(std::abs(v - 0.2) <= 0.019);
  CHECK_FALSE(init_tensor(3, {0, 2, 5, 7}, 5, 12).values == a.values);
}

TEST_CASE("adv_loss: worked values") {
  CHECK(adv_loss_value(Tensor::matrix(1, 2, {2.0, 2.0}), {0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const double expected = -std::log(std::exp(3.0) / (std::exp(3.0) + std::exp(1.0)));
  CHECK(adv_loss_value(Tensor::matrix(1, 2, {3.0, 1.0}), {0}) ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(adv_loss_value(Tensor::matrix(1, 2, {3.0, 1.0}), {0}) == doctest::Approx(0.1269).epsilon(1e-3));
  CHECK(adv_loss_value(Tensor::matrix(1, 3, {60.0, 1.0, 1.0}), {0}) < 1e-20);
  // Sums over users and targets.
  const Tensor two = Tensor::matrix(2, 3, {1.0, 2.0, 3.0, 0.5, 0.5, 0.0});
  double manual = 0.0;
  for (std::size_t u = 0; u < 2; ++u) {
    double z = 0.0;
    for (std::size_t v = 0; v < 3; ++v) z += std::exp(two.at(u, v));
    for (std::size_t t : {0, 2}) manual -= std::log(std::exp(two.at(u, t)) / z);
  }
  CHECK(adv_loss_value(two, {0, 2}) == doctest::Approx(manual).epsilon(1e-12));
  Tape tape;
  CHECK_THROWS_AS(adv_loss(tape.constant(two), std::vector<std::size_t>{3}), nk::ContractViolation);
}

TEST_CASE("adv_loss: gradient matches finite differences") {
  const Tensor s = testing::random_tensor({4, 6}, 5);
  const std::vector<std::size_t> targets{1, 4};
  Tape tape;
  Var x = tape.leaf(s);
  const Tensor g = tape.backward(adv_loss(x, targets))[x];
  const Tensor fd =
      nk::finite_difference_gradient([&](const Tensor& t) { return adv_loss_value(t, targets); }, s);
  CHECK(nk::max_relative_error(g, fd) < 1e-6);
}

TEST_CASE("project_normalize: worked examples") {
  SUBCASE("one-hot rows are unchanged") {
    const Tensor t = Tensor::matrix(2, 3, {0, 1, 0, 1, 0, 0});
    CHECK(project_normalize(t) == t);
    CHECK(project_normalize(t, MinMaxScope::per_row) == t);
  }
  SUBCASE("constant tensor becomes uniform") {
    const Tensor t({4, 5}, 0.7);
    const Tensor global = project_normalize(t), per_row = project_normalize(t, MinMaxScope::per_row);
    for (double v : global.values()) CHECK(v == doctest::Approx(0.2));
    for (double v : per_row.values()) CHECK(v == doctest::Approx(0.2));
  }
  SUBCASE("sum step after a global min-max that is already the identity") {
    const Tensor t = Tensor::matrix(3, 3, {0.2, 0.3, 0.5, 0.5, 0.5, 1.0, 0.0, 0.0, 1.0});
    const Tensor out = project_normalize(t);
    CHECK(out.at(0, 0) == doctest::Approx(0.2));
    CHECK(out.at(0, 1) == doctest::Approx(0.3));
    CHECK(out.at(0, 2) == doctest::Approx(0.5));
    CHECK(out.at(1, 0) == doctest::Approx(0.25));
    CHECK(out.at(1, 1) == doctest::Approx(0.25));
    CHECK(out.at(1, 2) == doctest::Approx(0.5));
  }
  SUBCASE("clip then global min-max") {
    const Tensor out = project_normalize(Tensor::matrix(1, 4, {-0.5, 0.25, 0.5, 2.0}));
    // Clip: [0, .25, .5, 1]; min-max identity; sum 1.75.
    CHECK(out.at(0, 1) == doctest::Approx(0.25 / 1.75));
    CHECK(out.at(0, 3) == doctest::Approx(1.0 / 1.75));
  }
  SUBCASE("per-row scope rescales each row on its own") {
    const Tensor out =
        project_normalize(Tensor::matrix(2, 2, {0.1, 0.2, 0.6, 0.9}), MinMaxScope::per_row);
    CHECK(out == Tensor::matrix(2, 2, {0, 1, 0, 1}));
  }
}

TEST_CASE("project_normalize: invariants and idempotence on random tensors") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor t = testing::random_tensor({6, 5}, seed, -1.0, 2.0);
    for (MinMaxScope scope : {MinMaxScope::global, MinMaxScope::per_row}) {
      const Tensor once = project_normalize(t, scope);
      CHECK(rows_stochastic(once));
    }
    // A stochastic tensor with global min 0 and max 1 is a fixed point.
    Tensor fixed = random_rows(6, 5, seed + 1000);
    fixed.at(0, 0) = 0.0;
    fixed.at(0, 1) = 1.0;
    for (std::size_t l = 2; l < 5; ++l) fixed.at(0, l) = 0.0;
    REQUIRE(rows_stochastic(fixed));
    const Tensor again = project_normalize(fixed);
    CHECK(nk::max_relative_error(again, fixed, 1.0) < 1e-12);
  }
}

TEST_CASE("make_problem: injected users, candidates and edge weight") {
  const graph::RatingGraph g = fixture_graph(60, 15, 3);
  AttackConfig cfg = small_config(1);
  const AttackProblem pr = make_problem(g, cfg);
  CHECK(pr.graph.num_users() == g.num_users() + 2);
  for (std::size_t u : pr.fake_users) {
    CHECK(pr.graph.label(u) == graph::UserLabel::injected_unlabeled);
    CHECK(pr.graph.user_degree(u) == 0);
  }
  CHECK(pr.candidates.size() == g.num_items());
  CHECK(pr.edge_weight == doctest::Approx(4.0 / static_cast<double>(g.num_items())));
  for (std::size_t u : pr.victims) CHECK(g.label(u) == graph::UserLabel::normal);

  cfg.candidate_threshold = 5;
  cfg.hops = 0;
  const AttackProblem shrunk = make_problem(g, cfg);
  CHECK(shrunk.candidates == std::vector<std::size_t>{0, 3});
  CHECK(shrunk.edge_weight == 1.0);

  cfg.targets = {g.num_items()};
  CHECK_THROWS_AS(make_problem(g, cfg), nk::ContractViolation);
  CHECK(default_fake_count(500) == 5);
  CHECK(default_fake_count(20) == 1);
}

TEST_CASE("meta_gradient: per-checkpoint terms match finite differences") {
  const graph::RatingGraph g = fixture_graph(40, 10, 4);
  const AttackProblem pr = make_problem(g, small_config(2));
  const Tensor values = random_rows(2 * pr.candidates.size(), 5, 9);
  const Tensor x = pr.features(values);
  for (std::uint64_t seed : {1, 2}) {
    const rec::RecParams params = live_params(pr, seed);
    const AdvGradient ag = adv_gradient(params, pr, x, values);
    const Tensor fd = nk::finite_difference_gradient(
        [&](const Tensor& t) { return adv_gradient(params, pr, x, t).loss; }, values);
    CHECK(nk::max_relative_error(ag.grad, fd, 1e-4) < 1e-4);
  }
}

TEST_CASE("meta_gradient: linear in the trajectory") {
  const graph::RatingGraph g = fixture_graph(40, 10, 4);
  const AttackProblem pr = make_problem(g, small_config(2));
  const Tensor values = random_rows(2 * pr.candidates.size(), 5, 9);
  const Tensor x = pr.features(values);
  const rec::RecParams a = live_params(pr, 1), b = live_params(pr, 2);
  const Tensor ga = adv_gradient(a, pr, x, values).grad;
  const Tensor gb = adv_gradient(b, pr, x, values).grad;

  const std::vector<rec::RecParams> single{a}, repeated{a, a, a}, mixed{a, b};
  CHECK(meta_gradient(single, pr, x, values) == ga);
  const Tensor rep = meta_gradient(repeated, pr, x, values);
  const Tensor mix = meta_gradient(mixed, pr, x, values);
  for (std::size_t i = 0; i < ga.size(); ++i) {
    CHECK(rep[i] == doctest::Approx(3.0 * ga[i]).epsilon(1e-12));
    CHECK(mix[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(meta_gradient(std::vector<rec::RecParams>{}, pr, x, values),
                  nk::ContractViolation);
}

TEST_CASE("metac_optimize: zero epochs, determinism and stochastic output") {
  const graph::RatingGraph g = fixture_graph(40, 10, 5);
  AttackConfig cfg = small_config(3);
  const AttackProblem pr = make_problem(g, cfg);

  cfg.epochs = 0;
  const MetacResult none = metac_optimize(pr, cfg);
  CHECK(none.tensor.values == init_tensor(2, pr.candidates, 5, cfg.seed).values);
  CHECK(none.adv_loss_log.empty());

  cfg.epochs = 3;
  const MetacResult a = metac_optimize(pr, cfg), b = metac_optimize(pr, cfg);
  CHECK(a.tensor.values == b.tensor.values);
  CHECK(a.adv_loss_log == b.adv_loss_log);
  CHECK(a.adv_loss_log.size() == 3);
  CHECK_FALSE(a.diverged);
  CHECK(rows_stochastic(a.tensor.values));
}

TEST_CASE("metac_optimize: one epoch with k1 = 1 is a single projected gradient step") {
  const graph::RatingGraph g = fixture_graph(40, 10, 6);
  AttackConfig cfg = small_config(4);
  cfg.k1 = 1;
  cfg.epochs = 1;
  cfg.lr_outer = 0.5;
  const AttackProblem pr = make_problem(g, cfg);
  const MetacResult res = metac_optimize(pr, cfg);

  // The surrogate is initialized the same way the attack does it.
  const rec::RecParams theta = rec::init_params(cfg.dim, cfg.hidden, graph::kFeatureDim,
                                                pr.graph.num_items(), 5, cfg.seed + 1);
  const Tensor r0 = init_tensor(2, pr.candidates, 5, cfg.seed).values;
  const Tensor grad = adv_gradient(theta, pr, pr.features(r0), r0).grad;
  Tensor stepped = r0;
  for (std::size_t i = 0; i < stepped.size(); ++i) stepped[i] -= cfg.lr_outer * grad[i];
  const Tensor expected = project_normalize(stepped);
  CHECK(nk::max_relative_error(res.tensor.values, expected, 1.0) <= 1e-9);
}

TEST_CASE("metac_optimize: lowers the adversarial loss on a 50x20 fixture") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const graph::RatingGraph g = fixture_graph(50, 20, seed);
    AttackConfig cfg;
    cfg.n_fake = 2;
    cfg.budget = 5;
    cfg.targets = {1, 7};
    cfg.k1 = 10;
    cfg.epochs = 10;
    cfg.lr_inner = 0.01;
    cfg.lr_outer = 1.0;
    cfg.dim = 8;
    cfg.hidden = 8;
    cfg.detector_hidden = 8;
    cfg.seed = seed;
    const AttackProblem pr = make_problem(g, cfg);
    const MetacResult res = metac_optimize(pr, cfg);
    CAPTURE(seed);
    CHECK_FALSE(res.diverged);
    CHECK(res.final_tensor_loss < res.initial_tensor_loss);
  }
}

TEST_CASE("discretize: worked examples") {
  SUBCASE("argmax rating and confidence") {
    auto p = discretize(tensor_from_rows({4}, 1, {{0.1, 0.2, 0.7}}), 1);
    REQUIRE(p.size() == 1);
    CHECK(p[0].ratings == std::vector<std::pair<std::size_t, int>>{{4, 3}});
  }
  SUBCASE("top-B by confidence") {
    const auto t = tensor_from_rows({1, 2, 3}, 1,
                                    {{0.025, 0.025, 0.025, 0.025, 0.9},
                                     {0.5, 0.125, 0.125, 0.125, 0.125},
                                     {0.075, 0.075, 0.075, 0.7, 0.075}});
    auto p = discretize(t, 2);
    CHECK(p[0].ratings == std::vector<std::pair<std::size_t, int>>{{1, 5}, {3, 4}});
  }
  SUBCASE("confidence ties go to the lower item index") {
    const auto t = tensor_from_rows({2, 9}, 1, {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}});
    auto p = discretize(t, 1);
    CHECK(p[0].ratings == std::vector<std::pair<std::size_t, int>>{{2, 1}});
  }
  SUBCASE("fewer candidates than the budget takes all and warns") {
    std::vector<std::string> warnings;
    auto p = discretize(tensor_from_rows({0, 1}, 1, {{1, 0}, {0, 1}}), 5, {}, &warnings);
    CHECK(p[0].ratings.size() == 2);
    CHECK(warnings.size() == 1);
  }
  SUBCASE("forced targets come first at the top rating") {
    const auto t = tensor_from_rows({0, 1, 2}, 1, {{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}});
    const std::vector<std::size_t> forced{2};
    auto p = discretize(t, 2, forced);
    CHECK(p[0].ratings == std::vector<std::pair<std::size_t, int>>{{0, 1}, {2, 2}});
  }
}

TEST_CASE("discretize: one-hot tensors round-trip to their profiles") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t vc = 8, n_fake = 3, budget = 8;
    std::vector<std::size_t> candidates(vc);
    std::iota(candidates.begin(), candidates.end(), 10);
    RatingTensor t;
    t.n_fake = n_fake;
    t.candidates = candidates;
    t.values = Tensor({n_fake * vc, 5});
    std::vector<InjectedProfile> expected(n_fake);
    for (std::size_t k = 0; k < n_fake; ++k)
      for (std::size_t c = 0; c < vc; ++c) {
        const int rating = static_cast<int>(rng() % 5) + 1;
        t.values.at(k * vc + c, static_cast<std::size_t>(rating - 1)) = 1.0;
        expected[k].ratings.emplace_back(candidates[c], rating);
      }
    const auto got = discretize(t, budget);
    for (std::size_t k = 0; k < n_fake; ++k) CHECK(got[k].ratings == expected[k].ratings);
  }
}

TEST_CASE("baseline attacks: shape of the profiles") {
  const graph::RatingGraph g = fixture_graph(100, 30, 7);
  BaselineConfig cfg;
  cfg.n_fake = 6;
  cfg.budget = 15;
  cfg.targets = {2, 5, 11, 17, 23};
  cfg.seed = 4;
  for (auto attack : {random_attack, average_attack, popular_attack}) {
    const auto profiles = attack(g, cfg);
    CHECK(profiles.size() == 6);
    for (const InjectedProfile& p : profiles) {
      CHECK(p.ratings.size() == 15);
      std::set<std::size_t> items;
      for (const auto& [v, r] : p.ratings) {
        items.insert(v);
        CHECK(r >= 1);
        CHECK(r <= 5);
      }
      CHECK(items.size() == 15);
      for (std::size_t t : cfg.targets) {
        auto it = std::find_if(p.ratings.begin(), p.ratings.end(),
                               [&](const auto& e) { return e.first == t; });
        REQUIRE(it != p.ratings.end());
        CHECK(it->second == 5);
      }
    }
    CHECK(attack(g, cfg)[0].ratings == profiles[0].ratings);
  }
  cfg.budget = 4;
  CHECK_THROWS_AS(random_attack(g, cfg), nk::ContractViolation);
}

TEST_CASE("popular_attack: three top-degree fillers at the top rating") {
  const graph::RatingGraph g = fixture_graph(100, 30, 8);
  BaselineConfig cfg;
  cfg.n_fake = 4;
  cfg.targets = {0, 1, 2, 3, 4};
  std::vector<std::size_t> order;
  for (std::size_t v = 5; v < g.num_items(); ++v) order.push_back(v);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return g.item_degree(a) > g.item_degree(b);
  });
  const std::vector<std::size_t> top(order.begin(), order.begin() + 3);
  for (const InjectedProfile& p : popular_attack(g, cfg)) {
    for (std::size_t v : top) {
      auto it = std::find_if(p.ratings.begin(), p.ratings.end(),
                             [&](const auto& e) { return e.first == v; });
      REQUIRE(it != p.ratings.end());
      CHECK(it->second == 5);
    }
  }
}

TEST_CASE("random and average attacks: filler ratings follow the rating statistics") {
  // Ratings: item 0 always 4, items 1..9 spread; targets {10}.
  std::vector<std::string> users, items;
  std::vector<graph::UserLabel> labels;
  std::vector<graph::Edge> edges;
  for (int v = 0; v < 11; ++v) items.push_back("i" + std::to_string(v));
  std::mt19937_64 rng(3);
  for (std::size_t u = 0; u < 40; ++u) {
    users.push_back("u" + std::to_string(u));
    labels.push_back(graph::UserLabel::normal);
    edges.push_back({u, 0, 4});
    for (std::size_t v = 1; v < 11; ++v) edges.push_back({u, v, static_cast<int>(rng() % 5) + 1});
  }
  const graph::RatingGraph g(users, labels, items, edges);
  double mu = 0.0;
  for (const auto& e : g.edges()) mu += e.rating;
  mu /= static_cast<double>(g.num_edges());

  BaselineConfig cfg;
  cfg.n_fake = 100;
  cfg.budget = 11;  // every item rated, 10 fillers each
  cfg.targets = {10};
  cfg.seed = 9;

  const auto avg = average_attack(g, cfg);
  for (const auto& p : avg) CHECK(p.ratings[0] == std::pair<std::size_t, int>{0, 4});

  // 1000 draws; rounding and clamping shift the mean only slightly around 3.
  const auto rnd = random_attack(g, cfg);
  double sum = 0.0, n = 0.0, ss = 0.0;
  for (const auto& p : rnd)
    for (const auto& [v, r] : p.ratings)
      if (v != 10) {
        sum += r;
        ss += r * r;
        n += 1.0;
      }
  const double mean = sum / n, sd = std::sqrt(ss / n - mean * mean);
  CHECK(n == 1000.0);
  CHECK(std::abs(mean - mu) < 3.0 * sd / std::sqrt(n));

  for (std::size_t v = 1; v < 10; ++v) {
    double item_mu = 0.0, cnt = 0.0;
    for (std::size_t e : g.item_edges(v)) {
      item_mu += g.edges()[e].rating;
      cnt += 1.0;
    }
    item_mu /= cnt;
    double s = 0.0, s2 = 0.0, c = 0.0;
    for (const auto& p : avg)
      for (const auto& [iv, r] : p.ratings)
        if (iv == v) {
          s += r;
          s2 += r * r;
          c += 1.0;
        }
    const double m = s / c, sdv = std::sqrt(s2 / c - m * m);
    CAPTURE(v);
    CHECK(std::abs(m - item_mu) < 3.0 * sdv / std::sqrt(c) + 0.05);
  }
}

TEST_CASE("profiles: ids, injection and CSV round trip") {
  const graph::RatingGraph base = fixture_graph(60, 15, 9);
  const graph::RatingGraph g = graph::add_users(base, std::vector<std::string>{"inj0001"},
                                                std::vector<graph::UserLabel>{graph::UserLabel::normal}, {});
  const auto ids = fake_user_ids(g, 2);
  CHECK(ids == std::vector<std::string>{"inj0002", "inj0003"});

  std::vector<InjectedProfile> profiles(2);
  profiles[0].ratings = {{0, 5}, {4, 2}};
  profiles[1].ratings = {{1, 5}};
  const graph::RatingGraph poisoned = inject(g, ids, profiles);
  CHECK(poisoned.num_users() == g.num_users() + 2);
  CHECK(poisoned.label(g.num_users()) == graph::UserLabel::injected_unlabeled);
  CHECK(poisoned.rating(g.num_users(), 4) == 2);
  CHECK(poisoned.num_edges() == g.num_edges() + 3);

  std::stringstream ss;
  write_profiles(ss, g, ids, profiles);
  const LoadedProfiles back = read_profiles(ss, g);
  CHECK(back.ids == ids);
  REQUIRE(back.profiles.size() == 2);
  CHECK(back.profiles[0].ratings == profiles[0].ratings);
  CHECK(back.profiles[1].ratings == profiles[1].ratings);

  const std::string item = g.item_id(0);
  auto parse = [&](const std::string& text) {
    std::istringstream in(text);
    return read_profiles(in, g);
  };
  CHECK_THROWS_AS(parse("user,item,rating\n"), graph::ParseError);
  CHECK_THROWS_AS(parse("fake_user_id,item_id,rating\nx," + item + ",7\n"), graph::ValidationError);
  CHECK_THROWS_AS(parse("fake_user_id,item_id,rating\nx,nope,3\n"), graph::ValidationError);
  CHECK_THROWS_AS(parse("fake_user_id,item_id,rating\ninj0001," + item + ",3\n"),
                  graph::ValidationError);
  CHECK_THROWS_AS(parse("fake_user_id,item_id,rating\nx," + item + ",3\nx," + item + ",4\n"),
                  graph::ValidationError);
  CHECK_THROWS_AS(parse("fake_user_id,item_id,rating\nx," + item + ",three\n"), graph::ParseError);
}
