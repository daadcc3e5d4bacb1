#include "shillforge/graphdata/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace shillforge::graph {

namespace {

constexpr std::size_t kRank = 3;
constexpr double kFactorSd = 0.5;
constexpr double kNoiseSd = 0.35;
constexpr double kPopularitySigma = 0.8;

std::string padded_id(char prefix, std::size_t index, std::size_t count) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(count).size());
  std::string digits = std::to_string(index + 1);
  return prefix + std::string(width - std::min(width, digits.size()), '0') + digits;
}

// Weighted sampling of k distinct indices (Efraimidis-Spirakis keys).
std::vector<std::size_t> sample_distinct(const std::vector<double>& weights, std::size_t k,
                                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<double, std::size_t>> keys(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double r = std::max(unit(rng), 1e-300);
    keys[i] = {std::log(r) / weights[i], i};
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = keys[i].second;
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_users == 0 || n_items == 0) throw ValidationError("synthetic: n_users and n_items must be positive");
  if (n_fake > n_users) throw ValidationError("synthetic: n_fake exceeds n_users");
  if (!(density >= 2.0)) throw ValidationError("synthetic: density must be >= 2");
  if (levels < 2) throw ValidationError("synthetic: levels must be >= 2");
  if (!rating_bias.empty() && rating_bias.size() != n_items) {
    throw ValidationError("synthetic: rating_bias has " + std::to_string(rating_bias.size()) +
                          " entries for " + std::to_string(n_items) + " items");
  }
}

RatingGraph synthesize(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> factor(0.0, kFactorSd), noise(0.0, kNoiseSd);
  std::lognormal_distribution<double> popularity(0.0, kPopularitySigma);
  std::poisson_distribution<int> extra(spec.density - 2.0);
  const double top = spec.levels;

  std::vector<double> bias = spec.rating_bias;
  if (bias.empty()) {
    std::uniform_real_distribution<double> b(1.5, top - 0.5);
    bias.resize(spec.n_items);
    for (double& x : bias) x = b(rng);
  }
  std::vector<double> weight(spec.n_items);
  for (double& w : weight) w = popularity(rng);
  std::vector<double> item_factor(spec.n_items * kRank);
  for (double& x : item_factor) x = factor(rng);

  std::vector<std::string> users, items;
  std::vector<UserLabel> labels;
  for (std::size_t v = 0; v < spec.n_items; ++v) items.push_back(padded_id('i', v, spec.n_items));

  // Fake users are spread through the id range so ids carry no signal.
  std::vector<bool> is_fake(spec.n_users, false);
  {
    std::vector<std::size_t> order(spec.n_users);
    for (std::size_t u = 0; u < spec.n_users; ++u) order[u] = u;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < spec.n_fake; ++k) is_fake[order[k]] = true;
  }

  const std::vector<double> uniform(spec.n_items, 1.0);
  std::uniform_int_distribution<int> any_rating(1, spec.levels);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    users.push_back(padded_id('u', u, spec.n_users));
    labels.push_back(is_fake[u] ? UserLabel::fake : UserLabel::normal);
    double taste[kRank];
    for (double& t : taste) t = factor(rng);
    const std::size_t degree =
        std::min<std::size_t>(spec.n_items, 2 + static_cast<std::size_t>(extra(rng)));
    for (std::size_t v : sample_distinct(is_fake[u] ? uniform : weight, degree, rng)) {
      int r;
      if (is_fake[u]) {
        r = any_rating(rng);
      } else {
        double x = bias[v] + noise(rng);
        for (std::size_t k = 0; k < kRank; ++k) x += taste[k] * item_factor[v * kRank + k];
        r = static_cast<int>(std::clamp(std::round(x), 1.0, top));
      }
      edges.push_back({u, v, r});
    }
  }
  return RatingGraph(std::move(users), std::move(labels), std::move(items), std::move(edges),
                     spec.levels);
}

}  // namespace shillforge::graph
