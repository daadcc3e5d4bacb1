#include "shillforge/detect/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>
#include <limits>
#include <ostream>
#include <random>

namespace shillforge::detect {

using nk::Tensor;

TrainResult train(rec::RecParams& params, const TrainData& data, const TrainConfig& cfg) {
  cfg.defense.validate();
  const std::size_t n = data.index->n_users;
  if (data.labels.size() != n) throw nk::ContractViolation("train: one label per user required");
  std::vector<bool> held(n, false);
  for (std::size_t u : data.holdout) held.at(u) = true;
  std::vector<std::size_t> loss_users;
  for (std::size_t u = 0; u < n; ++u)
    if (!held[u]) loss_users.push_back(u);

  TrainResult result;
  const std::size_t input_dim = params.dim() + 2;
  PdrHead* pdr = nullptr;
  switch (cfg.mode) {
    case Mode::plain:
      result.head = std::make_unique<rec::UniformHead>();
      break;
    case Mode::graphrfi:
      result.head = std::make_unique<GraphRfiHead>(init_detector(input_dim, cfg.detector_hidden, cfg.seed),
                                                   data.labels, loss_users, 1.0);
      break;
    case Mode::pdr: {
      auto head = std::make_unique<PdrHead>(init_detector(input_dim, cfg.detector_hidden, cfg.seed),
                                            init_priors(data.labels, cfg.defense.p0, cfg.defense.p1),
                                            loss_users, cfg.defense.temperature, cfg.normalize_ip);
      pdr = head.get();
      result.head = std::move(head);
      break;
    }
  }

  std::vector<double> holdout_scores(data.holdout.size());
  std::vector<bool> holdout_fake(data.holdout.size());
  for (std::size_t i = 0; i < data.holdout.size(); ++i)
    holdout_fake[i] = data.labels[data.holdout[i]] == kFake;
  const auto n_fake = std::count(holdout_fake.begin(), holdout_fake.end(), true);
  const bool holdout_has_both =
      n_fake > 0 && static_cast<std::size_t>(n_fake) < holdout_fake.size();

  rec::StepInput in{data.index, data.features, nullptr, cfg.lambda};
  double c1 = cfg.defense.c1_init, c2 = cfg.defense.c2_init;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    const bool adversarial = cfg.adversarial && epoch > cfg.pretrain_epochs;
    for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s) {
      log.loss = adversarial ? adversarial_training_step(params, *result.head, in, cfg.lr, cfg.noise_scale)
                             : rec::train_step(params, *result.head, in, cfg.lr);
    }
    Tensor q = posterior(params, *result.head, in);
    std::vector<double> qf(n);
    for (std::size_t u = 0; u < n; ++u) qf[u] = q.at(u, kFake);
    result.q_fake.push_back(qf);

    log.auc = std::numeric_limits<double>::quiet_NaN();
    if (holdout_has_both) {
      for (std::size_t i = 0; i < data.holdout.size(); ++i) holdout_scores[i] = qf[data.holdout[i]];
      log.auc = auc(holdout_scores, holdout_fake);
    }
    if (pdr) {
      if (!result.trigger_epoch && log.auc >= cfg.defense.a0) result.trigger_epoch = epoch;
      if (result.trigger_epoch) {
        pdr->set_priors(adjust_labels(pdr->priors(), q, cfg.defense, c1, c2));
        log.adjusted = true;
        log.c1 = c1;
        log.c2 = c2;
        std::tie(c1, c2) = decay_interval(c1, c2, cfg.defense);
      }
    }
    result.log.push_back(log);
  }
  return result;
}

std::vector<std::size_t> stratified_holdout(std::span<const std::size_t> pool,
                                            std::span<const std::size_t> labels, double frac,
                                            std::uint64_t seed) {
  if (!(frac >= 0.0 && frac < 1.0)) throw nk::ContractViolation("stratified_holdout: frac must lie in [0,1)");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t cls : {kFake, kNormal}) {
    std::vector<std::size_t> members;
    for (std::size_t u : pool)
      if (labels[u] == cls) members.push_back(u);
    std::shuffle(members.begin(), members.end(), rng);
    const auto k = static_cast<std::size_t>(std::llround(frac * static_cast<double>(members.size())));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_trajectory(std::ostream& out, const std::vector<std::vector<double>>& q_fake,
                      std::span<const std::string> user_ids, std::span<const std::string> user_types) {
  if (user_ids.size() != user_types.size()) throw nk::ContractViolation("write_trajectory: size mismatch");
  out << "epoch,user_id,user_type,q_fake\n";
  char buf[32];
  for (std::size_t e = 0; e < q_fake.size(); ++e) {
    if (q_fake[e].size() != user_ids.size()) throw nk::ContractViolation("write_trajectory: ragged epoch");
    for (std::size_t u = 0; u < user_ids.size(); ++u) {
      std::snprintf(buf, sizeof buf, "%.6f", q_fake[e][u]);
      out << (e + 1) << ',' << user_ids[u] << ',' << user_types[u] << ',' << buf << '\n';
    }
  }
}

}  // namespace shillforge::detect
