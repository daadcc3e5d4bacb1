#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "shillforge/recmodel/model.hpp"

namespace shillforge::detect {

/// Class columns of every posterior / prior table.
inline constexpr std::size_t kFake = 0;
inline constexpr std::size_t kNormal = 1;

struct DefenseConfig {
  double temperature = 2.0;
  double p0 = 0.01;
  double p1 = 0.2;
  double a0 = 0.8;
  double alpha = 0.05;
  double c1_init = 0.4;
  double c2_init = 0.85;
  double decay_step = 0.025;
  double c1_floor = 0.2;
  double c2_ceiling = 1.0;
  double p_min = 1e-3;

  /// Throws ContractViolation naming the first broken constraint.
  void validate() const;
};

/// Two-layer head (d* -> hidden, ReLU, hidden -> 2), stored as
/// {w1 [d*, h], b1 [1, h], w2 [h, 2], b2 [1, 2]}.
std::vector<nk::Tensor> init_detector(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

/// concat(z_u, mean_e, max_e) with e = per-edge absolute error; edgeless users get (0, 0).
nk::Var refined_embedding(nk::Var z, nk::Var abs_err, const rec::GraphIndex& index);

/// softmax(MLP(z*) / T) with columns (fake, normal).
nk::Var detect_forward(nk::Var zstar, std::span<const nk::Var> params, double temperature);

/// Mean over `users` of -log q[u, label[u]]; q is clamped at 1e-12 before the log.
nk::Var supervised_ce_loss(nk::Var q, std::span<const std::size_t> labels,
                           std::span<const std::size_t> users);

/// Rows [1 - p0, p0] for fake labels and [p1, 1 - p1] for normal labels.
nk::Tensor init_priors(std::span<const std::size_t> labels, double p0, double p1);

/// Implicit-posterior loss over `users`:
/// sum_u sum_c q[u,c] * log(sum_j q[j,c] / p[u,c]), class mass clamped at 1e-12.
nk::Var ip_loss(nk::Var q, const nk::Tensor& priors, std::span<const std::size_t> users);

/// Piecewise update of p(f) from confident posteriors, clamped to [p_min, 1 - p_min].
nk::Tensor adjust_labels(const nk::Tensor& priors, const nk::Tensor& q, const DefenseConfig& cfg,
                         double c1, double c2);

/// One clamped decay step of the confidence band.
std::pair<double, double> decay_interval(double c1, double c2, const DefenseConfig& cfg);

/// Mann-Whitney AUC of `scores` for the positive class, ties counted 1/2.
double auc(std::span<const double> scores, const std::vector<bool>& positive);

/// Shared network plumbing of both detection heads.
class MlpHead : public rec::DetectorHead {
 public:
  MlpHead(std::vector<nk::Tensor> params, double temperature, std::vector<std::size_t> loss_users);
  std::vector<nk::Tensor>& parameters() override { return params_; }
  rec::HeadOutput forward(nk::Tape& tape, std::span<const nk::Var> params,
                          const rec::HeadInput& in) const override;
  double temperature() const noexcept { return temperature_; }
  std::span<const std::size_t> loss_users() const noexcept { return loss_users_; }

 protected:
  virtual nk::Var fraudster_loss(nk::Var q) const = 0;

 private:
  std::vector<nk::Tensor> params_;
  double temperature_;
  std::vector<std::size_t> loss_users_;
};

/// Supervised head trained with cross-entropy on hard labels (T = 1 by default).
class GraphRfiHead final : public MlpHead {
 public:
  GraphRfiHead(std::vector<nk::Tensor> params, std::vector<std::size_t> labels,
               std::vector<std::size_t> loss_users, double temperature = 1.0);
  std::unique_ptr<rec::DetectorHead> clone() const override {
    return std::make_unique<GraphRfiHead>(*this);
  }

 protected:
  nk::Var fraudster_loss(nk::Var q) const override;

 private:
  std::vector<std::size_t> labels_;
};

/// Implicit-posterior head with adjustable priors.
class PdrHead final : public MlpHead {
 public:
  /// `normalize` divides the summed loss by the number of loss users.
  PdrHead(std::vector<nk::Tensor> params, nk::Tensor priors, std::vector<std::size_t> loss_users,
          double temperature, bool normalize);
  std::unique_ptr<rec::DetectorHead> clone() const override {
    return std::make_unique<PdrHead>(*this);
  }
  const nk::Tensor& priors() const noexcept { return priors_; }
  void set_priors(nk::Tensor priors);

 protected:
  nk::Var fraudster_loss(nk::Var q) const override;

 private:
  nk::Tensor priors_;
  bool normalize_;
};

/// Posterior table q [n_users, 2] at the current parameters.
nk::Tensor posterior(const rec::RecParams& params, const rec::DetectorHead& head,
                     const rec::StepInput& in);

/// delta = noise_scale * g / ||g|| over all tensors jointly; zero when g = 0.
std::vector<nk::Tensor> adversarial_perturbation(std::span<const nk::Tensor> grads,
                                                 double noise_scale);

/// Gradient step using the gradient evaluated at params + delta, where delta is the
/// adversarial perturbation of the current gradient. Returns the unperturbed loss.
double adversarial_training_step(rec::RecParams& params, rec::DetectorHead& head,
                                 const rec::StepInput& in, double lr, double noise_scale);

}  // namespace shillforge::detect
