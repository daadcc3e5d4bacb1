#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shillforge/graphdata/graph.hpp"
#include "shillforge/numkernel/ops.hpp"

namespace shillforge::rec {

/// Non-finite loss or gradient during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Recommender parameters. Embeddings are row vectors, so every transform is
/// applied as `x * W`.
struct RecParams {
  nk::Tensor item_table;              // [m, d]
  nk::Tensor user_proj;               // [feature_dim, d]
  std::vector<nk::Tensor> user_msg;   // L x [d, d], item -> user messages by rating level
  std::vector<nk::Tensor> item_msg;   // L x [d, d], user -> item messages by rating level
  nk::Tensor self_loop;               // [d, d], applied to the mean neighbor item embedding
  nk::Tensor pred_user;               // [d, d_h]
  nk::Tensor pred_item;               // [d, d_h]
  nk::Tensor pred_bias;               // [1, d_h]
  nk::Tensor pred_out;                // [d_h, 1]
  nk::Tensor pred_out_bias;           // [1, 1]

  int levels() const noexcept { return static_cast<int>(user_msg.size()); }
  std::size_t dim() const noexcept { return self_loop.rows(); }

  /// Every tensor with a stable name, in a fixed order shared with ParamVars.
  std::vector<std::pair<std::string, nk::Tensor*>> named();
  std::vector<std::pair<std::string, const nk::Tensor*>> named() const;
  bool all_finite() const;
};

/// Xavier-uniform initialization, s = sqrt(6 / (fan_in + fan_out)) per tensor.
/// Biases start at zero.
RecParams init_params(std::size_t d, std::size_t d_h, std::size_t feature_dim, std::size_t n_items,
                      int levels, std::uint64_t seed);

/// Continuous ratings for users that have no discrete edges. Row `k * |candidates| + c`
/// of `tensor` is the rating distribution of users[k] on candidates[c].
struct Relaxation {
  std::vector<std::size_t> users;
  std::vector<std::size_t> candidates;
  nk::Tensor tensor;  // [|users| * |candidates|, L]
  /// Multiplier on relaxed edges in item aggregation and the rating loss.
  double edge_weight = 1.0;
};

/// Checks the structural and stochastic invariants: relaxed users have no discrete
/// edges, candidates exist, and every row lies in [0,1] and sums to 1 within 1e-6.
void validate_relaxation(const graph::RatingGraph& g, const Relaxation& r);

/// Static message-passing layout for one graph (plus optional relaxed users).
/// Edges are indexed discrete-first, then relaxed pairs user-major.
struct GraphIndex {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  int levels = 5;
  std::size_t n_discrete = 0;
  std::vector<std::size_t> relaxed_users;
  std::vector<std::size_t> candidates;
  double edge_weight = 1.0;

  std::vector<std::size_t> owner;       // per edge
  std::vector<std::size_t> item;        // per edge
  std::vector<double> multiplicity;     // 1 for discrete edges, edge_weight for relaxed
  std::vector<double> user_mean_weight; // 1 / (edges of owner)
  std::vector<double> item_mean_weight; // multiplicity / effective degree of item
  std::vector<std::size_t> user_degree; // discrete + relaxed edge count per user

  std::vector<std::size_t> discrete_level_row;  // item * L + r - 1, for item->user messages
  std::vector<std::size_t> discrete_user_row;   // user * L + r - 1, for user->item messages
  nk::Tensor discrete_onehot;                   // [n_discrete, L]

  std::size_t num_edges() const noexcept { return owner.size(); }
  std::size_t num_relaxed() const noexcept { return owner.size() - n_discrete; }
  double effective_edges() const;
};

GraphIndex build_index(const graph::RatingGraph& g, const Relaxation* relax = nullptr);

/// User features for the model input. Relaxed users use expected statistics under
/// their rating distributions, with degree = edge_weight * |candidates|.
nk::Tensor model_features(const graph::RatingGraph& g, const Relaxation* relax = nullptr);

/// Parameters bound to a tape, in the order of RecParams::named().
struct ParamVars {
  nk::Var item_table, user_proj, self_loop, pred_user, pred_item, pred_bias, pred_out,
      pred_out_bias;
  nk::Var user_msg;  // [d, L*d], the per-level transforms side by side
  nk::Var item_msg;  // [d, L*d]
  std::vector<nk::Var> leaves;
  int levels = 5;
};

ParamVars bind(nk::Tape& tape, const RecParams& params, bool requires_grad);

struct Forward {
  nk::Var z;         // [n_users, d]
  nk::Var h;         // [n_items, d]
  nk::Var edge_pred; // [E, 1]
  nk::Var sq_err;    // [E, 1], expected squared error under the edge's rating distribution
  nk::Var abs_err;   // [E, 1], expected absolute error
};

/// One rating-aware propagation layer. `relaxed` is the relaxation tensor as a tape
/// value, or an invalid Var when the index has no relaxed users. Without `edge_outputs`
/// only z and h are computed.
Forward forward(const ParamVars& p, const GraphIndex& index, nk::Var features, nk::Var relaxed,
                bool edge_outputs = true);

/// r' = 1 + (L-1) * sigmoid(MLP(z_u, h_v)) for paired rows of z_rows and h_rows.
nk::Var predict(const ParamVars& p, nk::Var z_rows, nk::Var h_rows);
/// Predictions for every (user, item) pair, row u * m + v of an [a*m, 1] column.
nk::Var predict_pairs(const ParamVars& p, nk::Var z_users, nk::Var h);

/// sum(edge_weight * sq_err) / denom; weights must lie in [0, 1].
nk::Var weighted_rating_loss(nk::Var sq_err, nk::Var edge_weight, double denom);

struct HeadInput {
  nk::Var z;        // [n_users, d]
  nk::Var abs_err;  // [E, 1]
  const GraphIndex* index = nullptr;
};

struct HeadOutput {
  nk::Var normal_weight;   // [n_users, 1], P[normal] per user
  nk::Var fraudster_loss;  // scalar
  nk::Var q;               // [n_users, 2], columns (fake, normal)
};

/// Fraudster-detection component attached to the recommender.
class DetectorHead {
 public:
  virtual ~DetectorHead() = default;
  virtual std::vector<nk::Tensor>& parameters() = 0;
  virtual HeadOutput forward(nk::Tape& tape, std::span<const nk::Var> params,
                             const HeadInput& in) const = 0;
  virtual std::unique_ptr<DetectorHead> clone() const = 0;
};

/// Weights every user 1 and contributes no loss: a plain recommender.
class UniformHead final : public DetectorHead {
 public:
  std::vector<nk::Tensor>& parameters() override { return none_; }
  HeadOutput forward(nk::Tape& tape, std::span<const nk::Var> params,
                     const HeadInput& in) const override;
  std::unique_ptr<DetectorHead> clone() const override {
    return std::make_unique<UniformHead>(*this);
  }

 private:
  std::vector<nk::Tensor> none_;
};

struct JointLoss {
  Forward fwd;
  HeadOutput head;
  nk::Var rating;
  nk::Var total;
};

/// L_rating + lambda * L_fraudster, where each edge is weighted by its owner's P[normal].
JointLoss joint_loss(const ParamVars& p, const DetectorHead& head,
                     std::span<const nk::Var> head_params, const GraphIndex& index,
                     nk::Var features, nk::Var relaxed, double lambda);

struct StepInput {
  const GraphIndex* index = nullptr;
  const nk::Tensor* features = nullptr;
  const nk::Tensor* relaxed = nullptr;  // may be null
  double lambda = 1.0;
};

/// One full-batch gradient-descent step on the joint loss, updating the recommender
/// and the head in place. Returns the loss at the pre-step parameters.
double train_step(RecParams& params, DetectorHead& head, const StepInput& in, double lr);

/// Loss value and gradients at the current parameters, without updating.
struct LossGradient {
  double loss = 0.0;
  std::vector<nk::Tensor> rec;   // in RecParams::named() order
  std::vector<nk::Tensor> head;  // in head.parameters() order
};
LossGradient loss_gradient(const RecParams& params, const DetectorHead& head, const StepInput& in);

/// Dense [n_users, n_items] matrix of predicted ratings.
nk::Tensor predict_all(const RecParams& params, const GraphIndex& index, const nk::Tensor& features,
                       const nk::Tensor* relaxed = nullptr);

}  // namespace shillforge::rec
