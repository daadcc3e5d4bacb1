#include "shillforge/detect/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "shillforge/graphdata/graph.hpp"

namespace shillforge::detect {

using nk::ContractViolation;
using nk::Tape;
using nk::Tensor;
using nk::Var;

void DefenseConfig::validate() const {
  if (!(temperature > 0.0)) throw ContractViolation("defense: temperature must be > 0");
  if (!(p0 > 0.0 && p0 < 0.5) || !(p1 > 0.0 && p1 < 0.5)) {
    throw ContractViolation("defense: p0 and p1 must lie in (0, 0.5)");
  }
  if (!(a0 > 0.5 && a0 < 1.0)) throw ContractViolation("defense: a0 must lie in (0.5, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractViolation("defense: alpha must lie in (0, 1)");
  if (!(c1_init > 0.0 && c1_init < c2_init && c2_init <= 1.0)) {
    throw ContractViolation("defense: need 0 < c1 < c2 <= 1");
  }
  if (!(c1_floor > 0.0 && c1_floor <= c1_init && c2_ceiling >= c2_init && c2_ceiling <= 1.0)) {
    throw ContractViolation("defense: decay limits must bracket the initial band");
  }
  if (!(decay_step >= 0.0)) throw ContractViolation("defense: decay_step must be >= 0");
  if (!(p_min > 0.0 && p_min < 0.5)) throw ContractViolation("defense: p_min must lie in (0, 0.5)");
}

std::vector<Tensor> init_detector(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto xavier = [&](std::size_t r, std::size_t c) {
    const double s = std::sqrt(6.0 / static_cast<double>(r + c));
    std::uniform_real_distribution<double> dist(-s, s);
    Tensor t({r, c});
    for (double& v : t.values()) v = dist(rng);
    return t;
  };
  std::vector<Tensor> p;
  p.push_back(xavier(input_dim, hidden));
  p.push_back(Tensor({1, hidden}));
  p.push_back(xavier(hidden, 2));
  p.push_back(Tensor({1, 2}));
  return p;
}

Var refined_embedding(Var z, Var abs_err, const rec::GraphIndex& ix) {
  Var mean_e = nk::scatter_add_rows(abs_err, ix.owner, ix.n_users, ix.user_mean_weight);
  Var max_e = nk::segment_max(abs_err, ix.owner, ix.n_users);
  std::vector<Var> parts{z, mean_e, max_e};
  return nk::concat_cols(parts);
}

Var detect_forward(Var zstar, std::span<const Var> p, double temperature) {
  if (p.size() != 4) throw ContractViolation("detect_forward: expected 4 parameter tensors");
  Var hidden = nk::relu(nk::add_row(nk::matmul(zstar, p[0]), p[1]));
  Var logits = nk::add_row(nk::matmul(hidden, p[2]), p[3]);
  return nk::softmax(logits, temperature);
}

Var supervised_ce_loss(Var q, std::span<const std::size_t> labels, std::span<const std::size_t> users) {
  if (labels.size() != q.shape()[0]) {
    throw ContractViolation("supervised_ce_loss: " + std::to_string(labels.size()) +
                            " labels for q of shape " + nk::to_string(q.shape()));
  }
  if (users.empty()) return q.tape()->constant(Tensor::scalar(0.0));
  std::vector<std::size_t> flat;
  for (std::size_t u : users) {
    if (labels[u] > 1) throw ContractViolation("supervised_ce_loss: label must be 0 or 1");
    flat.push_back(u * 2 + labels[u]);
  }
  Var picked = nk::take(q, flat, {users.size(), 1});
  return nk::scale(nk::sum_all(nk::log(nk::clamp_min(picked, 1e-12))),
                   -1.0 / static_cast<double>(users.size()));
}

Tensor init_priors(std::span<const std::size_t> labels, double p0, double p1) {
  if (!(p0 > 0.0 && p0 < 1.0 && p1 > 0.0 && p1 < 1.0)) {
    throw ContractViolation("init_priors: p0 and p1 must lie in (0, 1)");
  }
  Tensor p({labels.size(), 2});
  for (std::size_t u = 0; u < labels.size(); ++u) {
    const double pf = labels[u] == kFake ? 1.0 - p0 : p1;
    p.at(u, kFake) = pf;
    p.at(u, kNormal) = 1.0 - pf;
  }
  return p;
}

Var ip_loss(Var q, const Tensor& priors, std::span<const std::size_t> users) {
  if (priors.shape() != q.shape()) {
    throw ContractViolation("ip_loss: priors " + nk::to_string(priors.shape()) + " vs q " +
                            nk::to_string(q.shape()));
  }
  for (double v : priors.values())
    if (!(v > 0.0)) throw ContractViolation("ip_loss: prior entries must be > 0");
  Tape& tape = *q.tape();
  if (users.empty()) return tape.constant(Tensor::scalar(0.0));
  Var qs = nk::gather_rows(q, users);
  Tensor log_p({users.size(), 2});
  for (std::size_t i = 0; i < users.size(); ++i)
    for (std::size_t c = 0; c < 2; ++c) log_p.at(i, c) = std::log(priors.at(users[i], c));
  // sum_u sum_c q log S_c = sum_c S_c log S_c.
  Var mass = nk::sum(qs, 0);
  Var mass_term = nk::sum_all(nk::mul(mass, nk::log(nk::clamp_min(mass, 1e-12))));
  Var prior_term = nk::sum_all(nk::mul(qs, tape.constant(log_p)));
  return nk::sub(mass_term, prior_term);
}

Tensor adjust_labels(const Tensor& priors, const Tensor& q, const DefenseConfig& cfg, double c1,
                     double c2) {
  if (!(c1 > 0.0 && c1 < c2 && c2 <= 1.0)) throw ContractViolation("adjust_labels: need 0 < c1 < c2 <= 1");
  if (priors.shape() != q.shape()) throw ContractViolation("adjust_labels: shape mismatch");
  Tensor out = priors;
  for (std::size_t u = 0; u < priors.rows(); ++u) {
    const double pf = priors.at(u, kFake), qf = q.at(u, kFake);
    double next = pf;
    if (qf < c1) {
      next = (1.0 - cfg.alpha) * pf - cfg.alpha * (1.0 - qf);
    } else if (qf > c2) {
      next = (1.0 - cfg.alpha) * pf + cfg.alpha * qf;
    } else {
      continue;
    }
    next = std::clamp(next, cfg.p_min, 1.0 - cfg.p_min);
    out.at(u, kFake) = next;
    out.at(u, kNormal) = 1.0 - next;
  }
  return out;
}

std::pair<double, double> decay_interval(double c1, double c2, const DefenseConfig& cfg) {
  // Snap to the limits so accumulated rounding cannot leave a 1-ulp gap.
  constexpr double snap = 1e-9;
  double n1 = c1 - cfg.decay_step, n2 = c2 + cfg.decay_step;
  if (n1 < cfg.c1_floor + snap) n1 = cfg.c1_floor;
  if (n2 > cfg.c2_ceiling - snap) n2 = cfg.c2_ceiling;
  return {n1, n2};
}

double auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ContractViolation("auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw graph::ValidationError("auc: both classes must be present");
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

MlpHead::MlpHead(std::vector<Tensor> params, double temperature, std::vector<std::size_t> loss_users)
    : params_(std::move(params)), temperature_(temperature), loss_users_(std::move(loss_users)) {
  if (params_.size() != 4) throw ContractViolation("detector head: expected 4 parameter tensors");
  if (!(temperature_ > 0.0)) throw ContractViolation("detector head: temperature must be > 0");
}

rec::HeadOutput MlpHead::forward(Tape& tape, std::span<const Var> params,
                                 const rec::HeadInput& in) const {
  Var zstar = refined_embedding(in.z, in.abs_err, *in.index);
  Var q = detect_forward(zstar, params, temperature_);
  Var normal = nk::matmul(q, tape.constant(Tensor({2, 1}, {0.0, 1.0})));
  return {normal, fraudster_loss(q), q};
}

GraphRfiHead::GraphRfiHead(std::vector<Tensor> params, std::vector<std::size_t> labels,
                           std::vector<std::size_t> loss_users, double temperature)
    : MlpHead(std::move(params), temperature, std::move(loss_users)), labels_(std::move(labels)) {}

Var GraphRfiHead::fraudster_loss(Var q) const { return supervised_ce_loss(q, labels_, loss_users()); }

PdrHead::PdrHead(std::vector<Tensor> params, Tensor priors, std::vector<std::size_t> loss_users,
                 double temperature, bool normalize)
    : MlpHead(std::move(params), temperature, std::move(loss_users)),
      priors_(std::move(priors)),
      normalize_(normalize) {}

void PdrHead::set_priors(Tensor priors) {
  if (priors.shape() != priors_.shape()) throw ContractViolation("PdrHead: prior shape changed");
  priors_ = std::move(priors);
}

Var PdrHead::fraudster_loss(Var q) const {
  Var loss = ip_loss(q, priors_, loss_users());
  if (normalize_ && !loss_users().empty()) {
    loss = nk::scale(loss, 1.0 / static_cast<double>(loss_users().size()));
  }
  return loss;
}

Tensor posterior(const rec::RecParams& params, const rec::DetectorHead& head, const rec::StepInput& in) {
  Tape tape;
  rec::ParamVars p = rec::bind(tape, params, false);
  std::vector<Var> hp;
  for (const Tensor& t : const_cast<rec::DetectorHead&>(head).parameters()) hp.push_back(tape.constant(t));
  Var x = tape.constant(*in.features);
  Var r = in.relaxed ? tape.constant(*in.relaxed) : Var{};
  rec::Forward f = rec::forward(p, *in.index, x, r);
  return head.forward(tape, hp, {f.z, f.abs_err, in.index}).q.value();
}

std::vector<Tensor> adversarial_perturbation(std::span<const Tensor> grads, double noise_scale) {
  double norm2 = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.values()) norm2 += v * v;
  std::vector<Tensor> out;
  const double factor = norm2 > 0.0 ? noise_scale / std::sqrt(norm2) : 0.0;
  for (const Tensor& g : grads) {
    Tensor d = g;
    for (double& v : d.values()) v *= factor;
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

void axpy(std::span<double> dst, std::span<const double> src, double a) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += a * src[k];
}

}  // namespace

double adversarial_training_step(rec::RecParams& params, rec::DetectorHead& head,
                                 const rec::StepInput& in, double lr, double noise_scale) {
  rec::LossGradient at = rec::loss_gradient(params, head, in);
  std::vector<Tensor> all = at.rec;
  all.insert(all.end(), at.head.begin(), at.head.end());
  std::vector<Tensor> delta = adversarial_perturbation(all, noise_scale);

  rec::RecParams shifted = params;
  std::unique_ptr<rec::DetectorHead> shifted_head = head.clone();
  auto named = shifted.named();
  auto& hp = shifted_head->parameters();
  for (std::size_t i = 0; i < named.size(); ++i) axpy(named[i].second->values(), delta[i].values(), 1.0);
  for (std::size_t i = 0; i < hp.size(); ++i) axpy(hp[i].values(), delta[named.size() + i].values(), 1.0);
  rec::LossGradient moved = rec::loss_gradient(shifted, *shifted_head, in);

  auto own = params.named();
  for (std::size_t i = 0; i < own.size(); ++i) {
    if (!moved.rec[i].all_finite()) throw rec::TrainingError("non-finite gradient for " + own[i].first);
    axpy(own[i].second->values(), moved.rec[i].values(), -lr);
  }
  auto& head_params = head.parameters();
  for (std::size_t i = 0; i < head_params.size(); ++i) {
    if (!moved.head[i].all_finite()) throw rec::TrainingError("non-finite detector gradient");
    axpy(head_params[i].values(), moved.head[i].values(), -lr);
  }
  return at.loss;
}

}  // namespace shillforge::detect
