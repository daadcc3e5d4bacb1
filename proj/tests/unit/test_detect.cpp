#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "rec_fixture.hpp"
#include "shillforge/detect/trainer.hpp"
#include "shillforge/graphdata/preprocess.hpp"
#include "shillforge/graphdata/synthetic.hpp"
#include "shillforge/numkernel/gradcheck.hpp"
#include "test_util.hpp"

using namespace shillforge;
using namespace shillforge::detect;
using nk::Tape;
using nk::Tensor;
using nk::Var;

namespace {

std::vector<Tensor> constant_logit_head(double fake_logit, double normal_logit) {
  std::vector<Tensor> p = init_detector(3, 2, 1);
  p[0] = Tensor({3, 2});
  p[2] = Tensor({2, 2});
  p[3] = Tensor({1, 2}, {fake_logit, normal_logit});
  return p;
}

Tensor q_for_logits(double f, double n, double temperature) {
  Tape tape;
  auto params = constant_logit_head(f, n);
  std::vector<Var> pv;
  for (auto& t : params) pv.push_back(tape.constant(t));
  return detect_forward(tape.constant(Tensor({1, 3})), pv, temperature).value();
}

double brute_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double won = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      pairs += 1.0;
      won += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return won / pairs;
}

// A positive predictor bias keeps hidden units active, so no two errors tie by construction.
rec::RecParams live_params() {
  rec::RecParams p = rec::init_params(4, 3, graph::kFeatureDim, 4, 5, 31);
  p.pred_bias = testing::random_tensor({1, 3}, 32, 0.1, 0.5);
  return p;
}

struct Fixture {
  graph::RatingGraph g = testing::small_graph_with_injected();
  rec::Relaxation relax = testing::small_relaxation(8);
  rec::GraphIndex index = rec::build_index(g, &relax);
  Tensor x = rec::model_features(g, &relax);
  rec::RecParams params = live_params();
  std::vector<std::size_t> labels{kNormal, kNormal, kFake, kNormal, kNormal, kNormal};
};

}  // namespace

TEST_CASE("refined_embedding: appends mean and max error") {
  // user 0 owns edges 0,1; user 1 owns edge 2; user 2 has none.
  rec::GraphIndex ix;
  ix.n_users = 3;
  ix.owner = {0, 0, 1};
  ix.user_mean_weight = {0.5, 0.5, 1.0};
  Tape tape;
  Var z = tape.constant(testing::random_tensor({3, 4}, 1));
  Var err = tape.constant(Tensor({3, 1}, {1.0, 3.0, 0.0}));
  Tensor out = refined_embedding(z, err, ix).value();
  CHECK(out.shape() == nk::Shape{3, 6});
  CHECK(out.at(0, 4) == 2.0);
  CHECK(out.at(0, 5) == 3.0);
  CHECK(out.at(1, 4) == 0.0);
  CHECK(out.at(1, 5) == 0.0);
  CHECK(out.at(2, 4) == 0.0);
  CHECK(out.at(2, 5) == 0.0);
}

TEST_CASE("detect_forward: temperature flattens the soft-max") {
  Tensor sym = q_for_logits(0.0, 0.0, 3.0);
  CHECK(sym.at(0, kFake) == doctest::Approx(0.5));
  const double e2 = std::exp(2.0), e1 = std::exp(1.0);
  CHECK(q_for_logits(2.0, 0.0, 1.0).at(0, kFake) == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-12));
  CHECK(q_for_logits(2.0, 0.0, 2.0).at(0, kFake) == doctest::Approx(e1 / (e1 + 1.0)).epsilon(1e-12));
  CHECK(q_for_logits(2.0, 0.0, 1.0).at(0, kFake) == doctest::Approx(0.881).epsilon(1e-3));
  CHECK(q_for_logits(2.0, 0.0, 2.0).at(0, kFake) == doctest::Approx(0.731).epsilon(1e-3));
  Tensor q = q_for_logits(-1.3, 0.4, 2.0);
  CHECK(q.at(0, 0) + q.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("supervised_ce_loss: hand values") {
  Tape tape;
  std::vector<std::size_t> users{0, 1};
  std::vector<std::size_t> labels{kFake, kNormal};
  Var onehot = tape.constant(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  CHECK(supervised_ce_loss(onehot, labels, users).value().item() == doctest::Approx(0.0));
  Var half = tape.constant(Tensor({2, 2}, 0.5));
  CHECK(supervised_ce_loss(half, labels, users).value().item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  Var mixed = tape.constant(Tensor({2, 2}, {0.9, 0.1, 0.2, 0.8}));
  const double expect = -(std::log(0.9) + std::log(0.8)) / 2.0;
  CHECK(supervised_ce_loss(mixed, labels, users).value().item() == doctest::Approx(expect).epsilon(1e-15));
  CHECK(expect == doctest::Approx(0.1643).epsilon(1e-3));
}

TEST_CASE("init_priors: constants and boundaries") {
  std::vector<std::size_t> labels{kFake, kNormal};
  Tensor p = init_priors(labels, 0.01, 0.2);
  CHECK(p.at(0, kFake) == 0.99);
  CHECK(p.at(0, kNormal) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(p.at(1, kFake) == 0.2);
  CHECK(p.at(1, kNormal) == 0.8);
  CHECK_THROWS_AS(init_priors(labels, 0.0, 0.0), nk::ContractViolation);
}

TEST_CASE("ip_loss: hand values, contract and permutation invariance") {
  Tape tape;
  std::vector<std::size_t> one{0}, two{0, 1};
  Tensor uniform1({1, 2}, 0.5), uniform2({2, 2}, 0.5);
  CHECK(ip_loss(tape.constant(Tensor({1, 2}, 0.5)), uniform1, one).value().item() ==
        doctest::Approx(0.0).epsilon(1e-15));
  const double v = ip_loss(tape.constant(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0})), uniform2, two).value().item();
  CHECK(std::abs(v - 2.0 * std::log(2.0)) <= 1e-9);
  Tensor bad({2, 2}, {0.0, 1.0, 0.5, 0.5});
  CHECK_THROWS_AS(ip_loss(tape.constant(Tensor({2, 2}, 0.5)), bad, two), nk::ContractViolation);

  Tensor q = testing::random_distribution_rows(7, 2, 4), p = testing::random_distribution_rows(7, 2, 5);
  std::vector<std::size_t> all(7), perm_rows{3, 0, 6, 1, 5, 2, 4};
  std::iota(all.begin(), all.end(), 0);
  Tensor qp({7, 2}), pp({7, 2});
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      qp.at(i, c) = q.at(perm_rows[i], c);
      pp.at(i, c) = p.at(perm_rows[i], c);
    }
  const double a = ip_loss(tape.constant(q), p, all).value().item();
  const double b = ip_loss(tape.constant(qp), pp, all).value().item();
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("ip_loss and joint loss: gradients match finite differences") {
  Fixture f;
  Tensor priors = init_priors(f.labels, 0.01, 0.2);
  std::vector<std::size_t> loss_users{0, 1, 2, 3, 4};
  for (std::uint64_t seed : {2u, 3u}) {
    auto det = init_detector(6, 5, seed);
    det[1] = testing::random_tensor({1, 5}, seed, 0.1, 0.4);
    for (int mode = 0; mode < 2; ++mode) {
      CAPTURE(mode);
      auto make = [&](std::vector<Tensor> p) -> std::unique_ptr<rec::DetectorHead> {
        if (mode == 0) return std::make_unique<GraphRfiHead>(p, f.labels, loss_users, 1.0);
        return std::make_unique<PdrHead>(p, priors, loss_users, 2.0, false);
      };
      rec::StepInput in{&f.index, &f.x, &f.relax.tensor, 0.7};
      auto head = make(det);
      rec::LossGradient lg = rec::loss_gradient(f.params, *head, in);
      for (std::size_t i = 0; i < det.size(); ++i) {
        Tensor fd = nk::finite_difference_gradient(
            [&](const Tensor& t) {
              auto d2 = det;
              d2[i] = t;
              auto h = make(d2);
              return rec::loss_gradient(f.params, *h, in).loss;
            },
            det[i]);
        CHECK(nk::max_relative_error(lg.head[i], fd, 1e-6) < 1e-4);
      }
      auto named = f.params.named();
      for (std::size_t i = 0; i < named.size(); ++i) {
        CAPTURE(named[i].first);
        Tensor fd = nk::finite_difference_gradient(
            [&](const Tensor& t) {
              rec::RecParams q = f.params;
              *q.named()[i].second = t;
              return rec::loss_gradient(q, *head, in).loss;
            },
            *named[i].second);
        CHECK(nk::max_relative_error(lg.rec[i], fd, 1e-6) < 1e-4);
      }
    }
  }
}

TEST_CASE("adjust_labels: hand cases, clamp and reinforcement") {
  DefenseConfig cfg;
  Tensor p({3, 2}, {0.2, 0.8, 0.2, 0.8, 0.2, 0.8});
  Tensor q({3, 2}, {0.9, 0.1, 0.1, 0.9, 0.5, 0.5});
  Tensor out = adjust_labels(p, q, cfg, 0.4, 0.85);
  CHECK(out.at(0, kFake) == doctest::Approx(0.235).epsilon(1e-15));
  CHECK(out.at(1, kFake) == doctest::Approx(0.145).epsilon(1e-15));
  CHECK(out.at(2, kFake) == 0.2);
  CHECK(out.at(0, kFake) + out.at(0, kNormal) == doctest::Approx(1.0).epsilon(1e-15));

  Tensor low({1, 2}, {0.02, 0.98}), lowq({1, 2}, {0.1, 0.9});
  CHECK(adjust_labels(low, lowq, cfg, 0.4, 0.85).at(0, kFake) == cfg.p_min);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double pf = std::clamp(unit(rng), cfg.p_min, 1 - cfg.p_min), qf = unit(rng);
    Tensor pt({1, 2}, {pf, 1 - pf}), qt({1, 2}, {qf, 1 - qf});
    const double next = adjust_labels(pt, qt, cfg, 0.4, 0.85).at(0, kFake);
    CHECK(next > 0.0);
    CHECK(next < 1.0);
    if (qf > 0.85 && pf < qf) CHECK(next > pf);
    if (qf < 0.4 && pf > cfg.p_min) CHECK(next < pf);
    if (qf >= 0.4 && qf <= 0.85) CHECK(next == pf);
  }
}

TEST_CASE("decay_interval: clamped schedule and fixed point") {
  DefenseConfig cfg;
  auto [a, b] = decay_interval(0.4, 0.85, cfg);
  CHECK(a == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(b == doctest::Approx(0.875).epsilon(1e-15));
  double c1 = 0.4, c2 = 0.85;
  std::size_t c1_steps = 0, c2_steps = 0;
  for (std::size_t step = 1; step <= 12; ++step) {
    std::tie(c1, c2) = decay_interval(c1, c2, cfg);
    if (c1 == 0.2 && c1_steps == 0) c1_steps = step;
    if (c2 == 1.0 && c2_steps == 0) c2_steps = step;
  }
  CHECK(c1_steps == 8);
  CHECK(c2_steps == 6);
  CHECK(decay_interval(0.2, 1.0, cfg) == std::pair{0.2, 1.0});
}

TEST_CASE("auc: hand cases and brute-force oracle") {
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, {true, true, false, false}) == 1.0);
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3}, {true, false, false}) == 0.5);
  CHECK(auc(std::vector<double>{0.9, 0.4, 0.6, 0.1}, {true, true, false, false}) == 0.75);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, {true, true}), graph::ValidationError);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 99;
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 7) / 7.0;  // coarse grid forces ties
      pos[i] = rng() % 3 == 0;
    }
    pos[0] = true;
    pos[1] = false;
    CHECK(auc(s, pos) == brute_auc(s, pos));
  }
}

TEST_CASE("adversarial training: zero noise equals a plain step, perturbation ascends") {
  Fixture f;
  rec::StepInput in{&f.index, &f.x, &f.relax.tensor, 1.0};
  std::vector<std::size_t> loss_users{0, 1, 2, 3, 4, 5};
  GraphRfiHead h1(init_detector(6, 4, 2), f.labels, loss_users), h2 = h1;
  rec::RecParams a = f.params, b = f.params;
  rec::train_step(a, h1, in, 0.05);
  adversarial_training_step(b, h2, in, 0.05, 0.0);
  CHECK(a.item_table == b.item_table);
  CHECK(a.pred_out == b.pred_out);
  CHECK(h1.parameters()[0] == h2.parameters()[0]);

  // Convex quadratic 0.5 * ||x - c||^2: gradient x - c.
  Tensor x({3, 1}, {0.3, -1.0, 2.0}), c({3, 1}, {1.0, 1.0, 1.0});
  auto quad = [&](const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += 0.5 * (t[i] - c[i]) * (t[i] - c[i]);
    return s;
  };
  Tensor g({3, 1});
  for (std::size_t i = 0; i < 3; ++i) g[i] = x[i] - c[i];
  std::vector<Tensor> grads{g};
  for (double scale : {1e-3, 1e-2, 1e-1}) {
    auto delta = adversarial_perturbation(grads, scale);
    Tensor moved = x;
    for (std::size_t i = 0; i < 3; ++i) moved[i] += delta[0][i];
    CHECK(quad(moved) >= quad(x));
    double norm = 0.0;
    for (double v : delta[0].values()) norm += v * v;
    CHECK(std::sqrt(norm) == doctest::Approx(scale).epsilon(1e-12));
  }

  rec::RecParams c1 = f.params, c2 = f.params;
  GraphRfiHead h3(init_detector(6, 4, 2), f.labels, loss_users), h4 = h3;
  adversarial_training_step(c1, h3, in, 0.05, 0.1);
  adversarial_training_step(c2, h4, in, 0.05, 0.1);
  CHECK(c1.item_table == c2.item_table);
}

TEST_CASE("stratified_holdout: per-class counts") {
  std::vector<std::size_t> labels(50, kNormal);
  for (std::size_t u = 0; u < 10; ++u) labels[u] = kFake;
  std::vector<std::size_t> pool(50);
  std::iota(pool.begin(), pool.end(), 0);
  auto h = stratified_holdout(pool, labels, 0.1, 3);
  CHECK(h.size() == 5);
  CHECK(std::count_if(h.begin(), h.end(), [&](std::size_t u) { return labels[u] == kFake; }) == 1);
  CHECK(h == stratified_holdout(pool, labels, 0.1, 3));
}

TEST_CASE("train: PDR trigger discipline and trajectory export") {
  graph::SyntheticSpec spec;
  spec.n_users = 60;
  spec.n_items = 20;
  spec.n_fake = 12;
  spec.seed = 4;
  auto g = graph::synthesize(spec);
  rec::GraphIndex ix = rec::build_index(g);
  Tensor x = rec::model_features(g);
  TrainData data;
  data.index = &ix;
  data.features = &x;
  for (auto l : g.labels()) data.labels.push_back(l == graph::UserLabel::fake ? kFake : kNormal);
  std::vector<std::size_t> pool(g.num_users());
  std::iota(pool.begin(), pool.end(), 0);
  data.holdout = stratified_holdout(pool, data.labels, 0.25, 1);

  for (double a0 : {0.55, 0.99}) {
    TrainConfig cfg;
    cfg.mode = Mode::pdr;
    cfg.epochs = 12;
    cfg.steps_per_epoch = 5;
    cfg.lr = 0.1;
    cfg.defense.a0 = a0;
    rec::RecParams params = rec::init_params(8, 8, graph::kFeatureDim, g.num_items(), 5, 2);
    TrainResult r = train(params, data, cfg);
    REQUIRE(r.log.size() == 12);
    bool reached = false;
    std::size_t adjustments = 0;
    for (const EpochLog& e : r.log) {
      reached = reached || e.auc >= a0;
      CHECK(e.adjusted == reached);
      if (e.adjusted) {
        const double expect_c1 = std::max(0.2, 0.4 - 0.025 * static_cast<double>(adjustments));
        CHECK(e.c1 == doctest::Approx(expect_c1).epsilon(1e-9));
        ++adjustments;
      }
    }
    CHECK(r.trigger_epoch.has_value() == reached);
    const auto& priors = dynamic_cast<const PdrHead&>(*r.head).priors();
    for (std::size_t u = 0; u < priors.rows(); ++u) {
      CHECK(priors.at(u, 0) > 0.0);
      CHECK(priors.at(u, 0) + priors.at(u, 1) == doctest::Approx(1.0).epsilon(1e-12));
    }

    std::vector<std::string> types(g.num_users(), "I");
    std::ostringstream csv;
    write_trajectory(csv, r.q_fake, g.user_ids(), types);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "epoch,user_id,user_type,q_fake");
    std::size_t rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 12 * g.num_users());
  }
}

TEST_CASE("train: deterministic per seed") {
  Fixture f;
  rec::GraphIndex ix = rec::build_index(f.g);
  Tensor x = rec::model_features(f.g);
  TrainData data{&ix, &x, f.labels, {}};
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.steps_per_epoch = 2;
  rec::RecParams a = f.params, b = f.params;
  auto ra = train(a, data, cfg);
  auto rb = train(b, data, cfg);
  CHECK(ra.q_fake == rb.q_fake);
  CHECK(a.item_table == b.item_table);
}
