#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "shillforge/attack/attack.hpp"
#include "shillforge/detect/detector.hpp"
#include "shillforge/graphdata/preprocess.hpp"

namespace shillforge::attack {

using nk::Tape;
using nk::Tensor;
using nk::Var;

RatingTensor init_tensor(std::size_t n_fake, std::vector<std::size_t> candidates, int levels,
                         std::uint64_t seed) {
  if (levels < 2) throw nk::ContractViolation("init_tensor: at least two rating levels required");
  RatingTensor t;
  t.n_fake = n_fake;
  const std::size_t rows = n_fake * candidates.size();
  t.candidates = std::move(candidates);
  const auto L = static_cast<std::size_t>(levels);
  t.values = Tensor({rows, L});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-0.01, 0.01);
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      t.values.at(r, l) = 1.0 / static_cast<double>(L) + noise(rng);
      total += t.values.at(r, l);
    }
    for (std::size_t l = 0; l < L; ++l) t.values.at(r, l) /= total;
  }
  return t;
}

Var adv_loss(Var scores, std::span<const std::size_t> targets) {
  if (scores.shape().size() != 2) throw nk::ContractViolation("adv_loss: scores must be a matrix");
  const std::size_t a = scores.shape()[0], m = scores.shape()[1];
  if (targets.empty()) throw nk::ContractViolation("adv_loss: no target items");
  std::vector<std::size_t> idx;
  idx.reserve(a * targets.size());
  for (std::size_t t : targets)
    if (t >= m) throw nk::ContractViolation("adv_loss: target index out of range");
  for (std::size_t u = 0; u < a; ++u)
    for (std::size_t t : targets) idx.push_back(u * m + t);
  Var ls = nk::log_softmax(scores);
  Var picked = nk::take(ls, idx, {idx.size(), 1});
  return nk::scale(nk::sum_all(picked), -1.0);
}

Tensor project_normalize(const Tensor& values, MinMaxScope scope) {
  const std::size_t rows = values.rows(), L = values.cols();
  Tensor out = values;
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  auto rescale = [&](std::size_t r0, std::size_t r1) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t l = 0; l < L; ++l) {
        lo = std::min(lo, out.at(r, l));
        hi = std::max(hi, out.at(r, l));
      }
    const bool flat = !(hi - lo > 0.0);
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t l = 0; l < L; ++l)
        out.at(r, l) = flat ? 1.0 : (out.at(r, l) - lo) / (hi - lo);
  };
  if (scope == MinMaxScope::global) {
    rescale(0, rows);
  } else {
    for (std::size_t r = 0; r < rows; ++r) rescale(r, r + 1);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t l = 0; l < L; ++l) total += out.at(r, l);
    for (std::size_t l = 0; l < L; ++l)
      out.at(r, l) = total > 0.0 ? out.at(r, l) / total : 1.0 / static_cast<double>(L);
  }
  return out;
}

rec::Relaxation AttackProblem::relaxation(const Tensor& values) const {
  return rec::Relaxation{fake_users, candidates, values, edge_weight};
}

Tensor AttackProblem::features(const Tensor& values) const {
  const rec::Relaxation r = relaxation(values);
  return rec::model_features(graph, &r);
}

AdvGradient adv_gradient(const rec::RecParams& params, const AttackProblem& problem,
                         const Tensor& features, const Tensor& values) {
  Tape tape;
  rec::ParamVars p = rec::bind(tape, params, false);
  Var x = tape.constant(features);
  Var r = tape.leaf(values, true);
  rec::Forward f = rec::forward(p, problem.index, x, r, false);
  Var zv = nk::gather_rows(f.z, problem.victims);
  Var scores = nk::reshape(rec::predict_pairs(p, zv, f.h),
                           {problem.victims.size(), problem.index.n_items});
  Var loss = adv_loss(scores, problem.targets);
  nk::Gradients g = tape.backward(loss);
  return {loss.value().item(), g[r]};
}

Tensor meta_gradient(std::span<const rec::RecParams> trajectory, const AttackProblem& problem,
                     const Tensor& features, const Tensor& values) {
  if (trajectory.empty()) throw nk::ContractViolation("meta_gradient: empty trajectory");
  Tensor total = Tensor::zeros_like(values);
  for (const rec::RecParams& p : trajectory) {
    const Tensor g = adv_gradient(p, problem, features, values).grad;
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += g[i];
  }
  return total;
}

void AttackConfig::validate(const graph::RatingGraph& g) const {
  if (n_fake == 0) throw nk::ContractViolation("attack: n_fake must be positive");
  if (budget == 0) throw nk::ContractViolation("attack: budget must be positive");
  if (targets.empty()) throw nk::ContractViolation("attack: no target items");
  for (std::size_t t : targets)
    if (t >= g.num_items()) throw nk::ContractViolation("attack: target index out of range");
  if (k1 == 0 || k2 == 0) throw nk::ContractViolation("attack: k1 and k2 must be positive");
  if (!(lr_inner >= 0.0) || !(lr_outer >= 0.0))
    throw nk::ContractViolation("attack: learning rates must be non-negative");
  if (dim == 0 || hidden == 0 || detector_hidden == 0)
    throw nk::ContractViolation("attack: layer sizes must be positive");
}

std::size_t default_fake_count(std::size_t n_users) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.01 * static_cast<double>(n_users))));
}

AttackProblem make_problem(const graph::RatingGraph& clean, const AttackConfig& cfg) {
  cfg.validate(clean);
  AttackProblem pr;
  const std::vector<std::string> ids = fake_user_ids(clean, cfg.n_fake);
  const std::vector<graph::UserLabel> labels(cfg.n_fake, graph::UserLabel::injected_unlabeled);
  pr.graph = graph::add_users(clean, ids, labels, {});
  for (std::size_t k = 0; k < cfg.n_fake; ++k) pr.fake_users.push_back(clean.num_users() + k);
  if (clean.num_items() > cfg.candidate_threshold) {
    pr.candidates = graph::candidate_items(clean, cfg.targets, cfg.hops);
  } else {
    pr.candidates.resize(clean.num_items());
    for (std::size_t v = 0; v < clean.num_items(); ++v) pr.candidates[v] = v;
  }
  for (std::size_t t : cfg.targets)
    if (!std::binary_search(pr.candidates.begin(), pr.candidates.end(), t))
      pr.candidates.insert(std::lower_bound(pr.candidates.begin(), pr.candidates.end(), t), t);
  pr.targets = cfg.targets;
  for (std::size_t u = 0; u < clean.num_users(); ++u)
    if (clean.label(u) == graph::UserLabel::normal) pr.victims.push_back(u);
  if (pr.victims.empty()) throw graph::ValidationError("attack: graph has no normal users");
  pr.edge_weight = std::min(1.0, static_cast<double>(cfg.budget) /
                                     static_cast<double>(pr.candidates.size()));
  const Tensor shape_only({cfg.n_fake * pr.candidates.size(), static_cast<std::size_t>(clean.levels())},
                          1.0 / clean.levels());
  const rec::Relaxation r = pr.relaxation(shape_only);
  pr.index = rec::build_index(pr.graph, &r);
  return pr;
}

MetacResult metac_optimize(const AttackProblem& problem, const AttackConfig& cfg) {
  const graph::RatingGraph& g = problem.graph;
  const int L = g.levels();
  MetacResult result;
  result.tensor = init_tensor(problem.fake_users.size(), problem.candidates, L, cfg.seed);
  const Tensor initial = result.tensor.values;

  // The attacker treats its own users as normal and trusts the observed labels.
  std::vector<std::size_t> labels(g.num_users(), detect::kNormal);
  std::vector<std::size_t> loss_users(g.num_users());
  for (std::size_t u = 0; u < g.num_users(); ++u) {
    loss_users[u] = u;
    if (g.label(u) == graph::UserLabel::fake) labels[u] = detect::kFake;
  }
  rec::RecParams params = rec::init_params(cfg.dim, cfg.hidden, graph::kFeatureDim, g.num_items(),
                                           L, cfg.seed + 1);
  detect::GraphRfiHead head(detect::init_detector(cfg.dim + 2, cfg.detector_hidden, cfg.seed + 2),
                            labels, loss_users);

  Tensor& values = result.tensor.values;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Tensor features = problem.features(values);
    std::vector<rec::RecParams> trajectory{params};
    rec::StepInput in{&problem.index, &features, &values, cfg.lambda};
    try {
      for (std::size_t j = 1; j < cfg.k1; ++j) {
        rec::train_step(params, head, in, cfg.lr_inner);
        trajectory.push_back(params);
      }
    } catch (const rec::TrainingError& e) {
      result.diverged = true;
      result.message = "surrogate diverged in epoch " + std::to_string(epoch + 1) + ": " + e.what();
      break;
    }
    Tensor next = values;
    double last_loss = 0.0;
    for (std::size_t s = 0; s < cfg.k2; ++s) {
      Tensor meta = Tensor::zeros_like(next);
      for (std::size_t i = 0; i < trajectory.size(); ++i) {
        const AdvGradient ag = adv_gradient(trajectory[i], problem, features, next);
        if (i + 1 == trajectory.size() && s == 0) last_loss = ag.loss;
        for (std::size_t q = 0; q < meta.size(); ++q) meta[q] += ag.grad[q];
      }
      for (std::size_t q = 0; q < next.size(); ++q) next[q] -= cfg.lr_outer * meta[q];
      next = project_normalize(next, cfg.scope);
    }
    if (!std::isfinite(last_loss) || !next.all_finite()) {
      result.diverged = true;
      result.message = "adversarial loss diverged in epoch " + std::to_string(epoch + 1);
      break;
    }
    result.adv_loss_log.push_back(last_loss);
    values = std::move(next);
  }

  const Tensor features_final = problem.features(values);
  result.final_tensor_loss = adv_gradient(params, problem, features_final, values).loss;
  result.initial_tensor_loss =
      adv_gradient(params, problem, problem.features(initial), initial).loss;
  return result;
}

}  // namespace shillforge::attack
