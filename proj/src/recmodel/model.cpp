#include "shillforge/recmodel/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "shillforge/graphdata/preprocess.hpp"

namespace shillforge::rec {

using nk::Shape;
using nk::Tape;
using nk::Tensor;
using nk::Var;

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-s, s);
  Tensor t({rows, cols});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> RecParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out{{"item_table", &item_table},
                                                   {"user_proj", &user_proj}};
  for (std::size_t l = 0; l < user_msg.size(); ++l)
    out.emplace_back("user_msg_" + std::to_string(l + 1), &user_msg[l]);
  for (std::size_t l = 0; l < item_msg.size(); ++l)
    out.emplace_back("item_msg_" + std::to_string(l + 1), &item_msg[l]);
  out.emplace_back("self_loop", &self_loop);
  out.emplace_back("pred_user", &pred_user);
  out.emplace_back("pred_item", &pred_item);
  out.emplace_back("pred_bias", &pred_bias);
  out.emplace_back("pred_out", &pred_out);
  out.emplace_back("pred_out_bias", &pred_out_bias);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> RecParams::named() const {
  auto mutable_view = const_cast<RecParams*>(this)->named();
  return {mutable_view.begin(), mutable_view.end()};
}

bool RecParams::all_finite() const {
  for (const auto& [name, t] : named())
    if (!t->all_finite()) return false;
  return true;
}

RecParams init_params(std::size_t d, std::size_t d_h, std::size_t feature_dim, std::size_t n_items,
                      int levels, std::uint64_t seed) {
  if (d == 0 || d_h == 0 || feature_dim == 0 || n_items == 0) {
    throw nk::ContractViolation("init_params: dimensions must be positive");
  }
  if (levels < 2) throw nk::ContractViolation("init_params: need at least 2 rating levels");
  std::mt19937_64 rng(seed);
  RecParams p;
  p.item_table = xavier(n_items, d, rng);
  p.user_proj = xavier(feature_dim, d, rng);
  for (int l = 0; l < levels; ++l) p.user_msg.push_back(xavier(d, d, rng));
  for (int l = 0; l < levels; ++l) p.item_msg.push_back(xavier(d, d, rng));
  p.self_loop = xavier(d, d, rng);
  p.pred_user = xavier(d, d_h, rng);
  p.pred_item = xavier(d, d_h, rng);
  p.pred_bias = Tensor({1, d_h});
  p.pred_out = xavier(d_h, 1, rng);
  p.pred_out_bias = Tensor({1, 1});
  return p;
}

void validate_relaxation(const graph::RatingGraph& g, const Relaxation& r) {
  if (!(r.edge_weight > 0.0 && r.edge_weight <= 1.0)) {
    throw graph::ValidationError("relaxation: edge_weight must lie in (0, 1]");
  }
  for (std::size_t u : r.users) {
    if (u >= g.num_users()) throw graph::ValidationError("relaxation: unknown user index");
    if (g.user_degree(u) != 0) {
      throw graph::ValidationError("relaxation: user '" + g.user_id(u) + "' has discrete edges");
    }
  }
  for (std::size_t v : r.candidates)
    if (v >= g.num_items()) throw graph::ValidationError("relaxation: unknown candidate item");
  const Shape want{r.users.size() * r.candidates.size(), static_cast<std::size_t>(g.levels())};
  if (r.tensor.shape() != want) {
    throw graph::ValidationError("relaxation: tensor shape " + nk::to_string(r.tensor.shape()) +
                                 ", expected " + nk::to_string(want));
  }
  const std::size_t L = want[1];
  for (std::size_t row = 0; row < want[0]; ++row) {
    double s = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const double x = r.tensor.at(row, l);
      if (!(x >= 0.0 && x <= 1.0)) throw graph::ValidationError("relaxation: entry outside [0,1]");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw graph::ValidationError("relaxation: row " + std::to_string(row) + " sums to " +
                                   std::to_string(s));
    }
  }
}

double GraphIndex::effective_edges() const {
  double s = 0.0;
  for (double m : multiplicity) s += m;
  return s;
}

GraphIndex build_index(const graph::RatingGraph& g, const Relaxation* relax) {
  GraphIndex ix;
  ix.n_users = g.num_users();
  ix.n_items = g.num_items();
  ix.levels = g.levels();
  ix.n_discrete = g.num_edges();
  const auto L = static_cast<std::size_t>(g.levels());

  std::vector<double> item_deg(ix.n_items, 0.0);
  ix.user_degree.assign(ix.n_users, 0);
  ix.discrete_onehot = Tensor({ix.n_discrete, L});
  std::size_t e = 0;
  for (const graph::Edge& edge : g.edges()) {
    ix.owner.push_back(edge.user);
    ix.item.push_back(edge.item);
    ix.multiplicity.push_back(1.0);
    ix.discrete_level_row.push_back(edge.item * L + static_cast<std::size_t>(edge.rating - 1));
    ix.discrete_user_row.push_back(edge.user * L + static_cast<std::size_t>(edge.rating - 1));
    ix.discrete_onehot.at(e++, static_cast<std::size_t>(edge.rating - 1)) = 1.0;
    item_deg[edge.item] += 1.0;
    ++ix.user_degree[edge.user];
  }
  if (relax) {
    if (relax->users.empty() || relax->candidates.empty()) {
      throw graph::ValidationError("relaxation: needs at least one user and one candidate");
    }
    if (!(relax->edge_weight > 0.0 && relax->edge_weight <= 1.0)) {
      throw graph::ValidationError("relaxation: edge_weight must lie in (0, 1]");
    }
    ix.relaxed_users = relax->users;
    ix.candidates = relax->candidates;
    ix.edge_weight = relax->edge_weight;
    for (std::size_t u : relax->users) {
      if (u >= ix.n_users || g.user_degree(u) != 0) {
        throw graph::ValidationError("relaxation: relaxed users must exist and have no edges");
      }
      for (std::size_t v : relax->candidates) {
        if (v >= ix.n_items) throw graph::ValidationError("relaxation: unknown candidate item");
        ix.owner.push_back(u);
        ix.item.push_back(v);
        ix.multiplicity.push_back(relax->edge_weight);
        item_deg[v] += relax->edge_weight;
        ++ix.user_degree[u];
      }
    }
  }
  for (std::size_t k = 0; k < ix.owner.size(); ++k) {
    ix.user_mean_weight.push_back(1.0 / static_cast<double>(ix.user_degree[ix.owner[k]]));
    ix.item_mean_weight.push_back(ix.multiplicity[k] / item_deg[ix.item[k]]);
  }
  return ix;
}

nk::Tensor model_features(const graph::RatingGraph& g, const Relaxation* relax) {
  auto stats = graph::user_stats(g);
  if (relax) {
    const std::size_t nc = relax->candidates.size();
    const std::size_t L = static_cast<std::size_t>(g.levels());
    for (std::size_t k = 0; k < relax->users.size(); ++k) {
      double mean = 0.0, second = 0.0, top = 0.0, bottom = 0.0;
      for (std::size_t c = 0; c < nc; ++c) {
        const std::size_t row = k * nc + c;
        for (std::size_t l = 0; l < L; ++l) {
          const double p = relax->tensor.at(row, l), r = static_cast<double>(l + 1);
          mean += p * r;
          second += p * r * r;
        }
        top += relax->tensor.at(row, L - 1);
        bottom += relax->tensor.at(row, 0);
      }
      const double n = static_cast<double>(nc);
      graph::UserStats& s = stats.at(relax->users[k]);
      s.degree = relax->edge_weight * n;
      s.mean = mean / n;
      s.variance = std::max(0.0, second / n - s.mean * s.mean);
      s.frac_max = top / n;
      s.frac_min = bottom / n;
    }
  }
  return graph::scale_features(stats);
}

ParamVars bind(Tape& tape, const RecParams& params, bool requires_grad) {
  ParamVars p;
  p.levels = params.levels();
  for (const auto& [name, t] : params.named()) p.leaves.push_back(tape.leaf(*t, requires_grad));
  const std::size_t L = params.user_msg.size();
  std::size_t i = 0;
  p.item_table = p.leaves[i++];
  p.user_proj = p.leaves[i++];
  std::vector<Var> um(p.leaves.begin() + static_cast<std::ptrdiff_t>(i),
                      p.leaves.begin() + static_cast<std::ptrdiff_t>(i + L));
  i += L;
  std::vector<Var> im(p.leaves.begin() + static_cast<std::ptrdiff_t>(i),
                      p.leaves.begin() + static_cast<std::ptrdiff_t>(i + L));
  i += L;
  p.user_msg = nk::concat_cols(um);
  p.item_msg = nk::concat_cols(im);
  p.self_loop = p.leaves[i++];
  p.pred_user = p.leaves[i++];
  p.pred_item = p.leaves[i++];
  p.pred_bias = p.leaves[i++];
  p.pred_out = p.leaves[i++];
  p.pred_out_bias = p.leaves[i++];
  return p;
}

namespace {

// Relaxed messages: sum_l R[e,l] * src[row(e,l)], scattered into `n_out` rows.
Var relaxed_messages(Var src_by_level, Var relaxed, const GraphIndex& ix, bool to_items,
                     std::size_t n_out) {
  const std::size_t L = static_cast<std::size_t>(ix.levels);
  const std::size_t d = src_by_level.shape()[1];
  const std::size_t nr = ix.num_relaxed();
  std::vector<std::size_t> rows(nr * L), expand(nr * L * d), dest(nr * L);
  std::vector<double> weights(nr * L);
  for (std::size_t e = 0; e < nr; ++e) {
    const std::size_t k = ix.n_discrete + e;
    const std::size_t src = to_items ? ix.owner[k] : ix.item[k];
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t row = e * L + l;
      rows[row] = src * L + l;
      dest[row] = to_items ? ix.item[k] : ix.owner[k];
      weights[row] = to_items ? ix.item_mean_weight[k] : ix.user_mean_weight[k];
      for (std::size_t j = 0; j < d; ++j) expand[row * d + j] = e * L + l;
    }
  }
  Var gathered = nk::gather_rows(src_by_level, rows);
  Var probs = nk::take(relaxed, expand, {nr * L, d});
  return nk::scatter_add_rows(nk::mul(gathered, probs), dest, n_out, weights);
}

std::span<const double> head_of(const std::vector<double>& v, std::size_t n) {
  return std::span<const double>(v).first(n);
}

}  // namespace

Forward forward(const ParamVars& p, const GraphIndex& ix, Var features, Var relaxed,
                bool edge_outputs) {
  Tape& tape = *features.tape();
  const std::size_t L = static_cast<std::size_t>(ix.levels);
  const std::size_t d = p.self_loop.shape()[0];
  const std::size_t nd = ix.n_discrete;
  const bool has_relaxed = ix.num_relaxed() > 0;
  if (has_relaxed && !relaxed.valid()) {
    throw nk::ContractViolation("forward: index has relaxed users but no tensor was given");
  }
  if (has_relaxed && relaxed.shape() != Shape{ix.num_relaxed(), L}) {
    throw nk::ContractViolation("forward: relaxed tensor shape " + nk::to_string(relaxed.shape()) +
                                " does not match index");
  }
  if (ix.num_edges() == 0) {
    throw nk::ContractViolation("forward: graph has no edges");
  }

  Var proj = nk::matmul(features, p.user_proj);

  // Users -> items.
  Var user_levels = nk::reshape(nk::matmul(proj, p.item_msg), {ix.n_users * L, d});
  Var item_agg = tape.constant(Tensor({ix.n_items, d}));
  if (nd > 0) {
    item_agg = nk::scatter_add_rows(nk::gather_rows(user_levels, ix.discrete_user_row),
                                    std::span(ix.item).first(nd), ix.n_items,
                                    head_of(ix.item_mean_weight, nd));
  }
  if (has_relaxed) {
    item_agg = nk::add(item_agg, relaxed_messages(user_levels, relaxed, ix, true, ix.n_items));
  }
  Var h = nk::add(p.item_table, item_agg);

  // Items -> users.
  Var item_levels = nk::reshape(nk::matmul(h, p.user_msg), {ix.n_items * L, d});
  Var user_agg = tape.constant(Tensor({ix.n_users, d}));
  if (nd > 0) {
    user_agg = nk::scatter_add_rows(nk::gather_rows(item_levels, ix.discrete_level_row),
                                    std::span(ix.owner).first(nd), ix.n_users,
                                    head_of(ix.user_mean_weight, nd));
  }
  if (has_relaxed) {
    user_agg = nk::add(user_agg, relaxed_messages(item_levels, relaxed, ix, false, ix.n_users));
  }
  Var neighbor_mean =
      nk::scatter_add_rows(nk::gather_rows(h, ix.item), ix.owner, ix.n_users, ix.user_mean_weight);
  Var z = nk::relu(nk::add(nk::add(proj, user_agg), nk::matmul(neighbor_mean, p.self_loop)));

  Forward f;
  f.z = z;
  f.h = h;
  if (!edge_outputs) return f;
  f.edge_pred = predict(p, nk::gather_rows(z, ix.owner), nk::gather_rows(h, ix.item));

  Var dist = tape.constant(ix.discrete_onehot);
  if (has_relaxed) {
    std::vector<Var> parts;
    if (nd > 0) parts.push_back(dist);
    parts.push_back(relaxed);
    dist = parts.size() == 1 ? relaxed : nk::concat_rows(parts);
  }
  const std::size_t E = ix.num_edges();
  Tensor levels({E, L});
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t l = 0; l < L; ++l) levels.at(e, l) = static_cast<double>(l + 1);
  Tensor ones({1, L}, 1.0);
  Var diff = nk::sub(nk::matmul(f.edge_pred, tape.constant(ones)), tape.constant(levels));
  f.sq_err = nk::sum(nk::mul(dist, nk::square(diff)), 1);
  f.abs_err = nk::sum(nk::mul(dist, nk::abs(diff)), 1);
  return f;
}

namespace {

Var rescale(Var logits, int levels) {
  return nk::add_scalar(nk::scale(nk::sigmoid(logits), static_cast<double>(levels - 1)), 1.0);
}

}  // namespace

Var predict(const ParamVars& p, Var z_rows, Var h_rows) {
  Var hidden = nk::relu(nk::add_row(
      nk::add(nk::matmul(z_rows, p.pred_user), nk::matmul(h_rows, p.pred_item)), p.pred_bias));
  return rescale(nk::add_row(nk::matmul(hidden, p.pred_out), p.pred_out_bias), p.levels);
}

Var predict_pairs(const ParamVars& p, Var z_users, Var h) {
  Var hidden = nk::relu(nk::outer_add_rows(nk::matmul(z_users, p.pred_user),
                                           nk::add_row(nk::matmul(h, p.pred_item), p.pred_bias)));
  return rescale(nk::add_row(nk::matmul(hidden, p.pred_out), p.pred_out_bias), p.levels);
}

Var weighted_rating_loss(Var sq_err, Var edge_weight, double denom) {
  for (double w : edge_weight.value().values()) {
    if (!(w >= -1e-12 && w <= 1.0 + 1e-12)) {
      throw nk::ContractViolation("weighted_rating_loss: weight " + std::to_string(w) +
                                  " outside [0,1]");
    }
  }
  if (!(denom > 0.0)) throw nk::ContractViolation("weighted_rating_loss: denominator must be > 0");
  return nk::scale(nk::sum_all(nk::mul(edge_weight, sq_err)), 1.0 / denom);
}

HeadOutput UniformHead::forward(Tape& tape, std::span<const Var>, const HeadInput& in) const {
  const std::size_t n = in.index->n_users;
  Tensor q({n, 2});
  for (std::size_t u = 0; u < n; ++u) q.at(u, 1) = 1.0;
  return {tape.constant(Tensor({n, 1}, 1.0)), tape.constant(Tensor::scalar(0.0)), tape.constant(q)};
}

JointLoss joint_loss(const ParamVars& p, const DetectorHead& head, std::span<const Var> head_params,
                     const GraphIndex& ix, Var features, Var relaxed, double lambda) {
  Tape& tape = *features.tape();
  JointLoss out;
  out.fwd = forward(p, ix, features, relaxed);
  out.head = head.forward(tape, head_params, {out.fwd.z, out.fwd.abs_err, &ix});
  Tensor mult({ix.num_edges(), 1}, ix.multiplicity);
  Var edge_weight =
      nk::mul(nk::gather_rows(out.head.normal_weight, ix.owner), tape.constant(std::move(mult)));
  out.rating = weighted_rating_loss(out.fwd.sq_err, edge_weight, ix.effective_edges());
  out.total = nk::add(out.rating, nk::scale(out.head.fraudster_loss, lambda));
  return out;
}

LossGradient loss_gradient(const RecParams& params, const DetectorHead& head, const StepInput& in) {
  Tape tape;
  ParamVars p = bind(tape, params, true);
  std::vector<Var> hp;
  for (const Tensor& t : const_cast<DetectorHead&>(head).parameters()) hp.push_back(tape.leaf(t));
  Var x = tape.constant(*in.features);
  Var r = in.relaxed ? tape.constant(*in.relaxed) : Var{};
  JointLoss jl = joint_loss(p, head, hp, *in.index, x, r, in.lambda);
  LossGradient out;
  out.loss = jl.total.value().item();
  if (!std::isfinite(out.loss)) {
    throw TrainingError("joint loss is not finite (rating " +
                        std::to_string(jl.rating.value().item()) + ", fraudster " +
                        std::to_string(jl.head.fraudster_loss.value().item()) + ")");
  }
  nk::Gradients g = tape.backward(jl.total);
  for (Var v : p.leaves) out.rec.push_back(g[v]);
  for (Var v : hp) out.head.push_back(g[v]);
  return out;
}

double train_step(RecParams& params, DetectorHead& head, const StepInput& in, double lr) {
  if (!(lr >= 0.0)) throw nk::ContractViolation("train_step: learning rate must be >= 0");
  LossGradient lg = loss_gradient(params, head, in);
  auto named = params.named();
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (!lg.rec[i].all_finite()) throw TrainingError("non-finite gradient for " + named[i].first);
  }
  for (std::size_t i = 0; i < lg.head.size(); ++i) {
    if (!lg.head[i].all_finite()) {
      throw TrainingError("non-finite gradient for detector tensor " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto dst = named[i].second->values();
    auto src = lg.rec[i].values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] -= lr * src[k];
  }
  auto& hp = head.parameters();
  for (std::size_t i = 0; i < hp.size(); ++i) {
    auto dst = hp[i].values();
    auto src = lg.head[i].values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] -= lr * src[k];
  }
  return lg.loss;
}

Tensor predict_all(const RecParams& params, const GraphIndex& ix, const Tensor& features,
                   const Tensor* relaxed) {
  Tape tape;
  ParamVars p = bind(tape, params, false);
  Var x = tape.constant(features);
  Var r = relaxed ? tape.constant(*relaxed) : Var{};
  Forward f = forward(p, ix, x, r, false);
  Var all = predict_pairs(p, f.z, f.h);
  return all.value().reshaped({ix.n_users, ix.n_items});
}

}  // namespace shillforge::rec
