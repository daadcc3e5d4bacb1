#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <unordered_set>

#include "shillforge/attack/attack.hpp"
#include "shillforge/graphdata/io.hpp"

namespace shillforge::attack {

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

/// Mean and sample standard deviation; sd is 0 below two values.
Moments moments(std::span<const double> xs) {
  Moments m;
  if (xs.empty()) return m;
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return m;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return m;
}

int draw_rating(std::mt19937_64& rng, Moments m, int levels) {
  std::normal_distribution<double> dist(m.mean, m.sd);
  const double x = m.sd > 0.0 ? dist(rng) : m.mean;
  return static_cast<int>(std::lround(std::clamp(x, 1.0, static_cast<double>(levels))));
}

void validate_baseline(const graph::RatingGraph& g, const BaselineConfig& cfg) {
  if (cfg.n_fake == 0) throw nk::ContractViolation("attack: n_fake must be positive");
  if (cfg.targets.empty()) throw nk::ContractViolation("attack: no target items");
  if (cfg.budget < cfg.targets.size())
    throw nk::ContractViolation("attack: budget smaller than the target set");
  if (cfg.budget > g.num_items()) throw nk::ContractViolation("attack: budget exceeds item count");
  if (!(cfg.popular_share >= 0.0 && cfg.popular_share <= 1.0))
    throw nk::ContractViolation("attack: popular_share must lie in [0,1]");
  for (std::size_t t : cfg.targets)
    if (t >= g.num_items()) throw nk::ContractViolation("attack: target index out of range");
  if (g.num_edges() == 0) throw graph::ValidationError("attack: graph has no ratings");
}

/// Uniformly chosen distinct items from `pool`.
std::vector<std::size_t> sample_items(std::vector<std::size_t> pool, std::size_t n,
                                      std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(n, pool.size()));
  std::sort(pool.begin(), pool.end());
  return pool;
}

enum class FillerModel { global, per_item };

std::vector<InjectedProfile> build_profiles(const graph::RatingGraph& g, const BaselineConfig& cfg,
                                            FillerModel model, std::size_t n_popular) {
  validate_baseline(g, cfg);
  const int L = g.levels();
  std::vector<double> all;
  std::vector<std::vector<double>> per_item(g.num_items());
  for (const graph::Edge& e : g.edges()) {
    all.push_back(e.rating);
    per_item[e.item].push_back(e.rating);
  }
  const Moments global = moments(all);

  std::set<std::size_t> target_set(cfg.targets.begin(), cfg.targets.end());
  std::vector<std::size_t> popular;
  if (n_popular > 0) {
    std::vector<std::size_t> order;
    for (std::size_t v = 0; v < g.num_items(); ++v)
      if (!target_set.contains(v)) order.push_back(v);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return g.item_degree(a) > g.item_degree(b);
    });
    order.resize(std::min(n_popular, order.size()));
    popular = std::move(order);
  }
  std::vector<std::size_t> filler_pool;
  for (std::size_t v = 0; v < g.num_items(); ++v)
    if (!target_set.contains(v) && std::find(popular.begin(), popular.end(), v) == popular.end())
      filler_pool.push_back(v);

  const std::size_t n_random = cfg.budget - target_set.size() - popular.size();
  std::mt19937_64 rng(cfg.seed);
  std::vector<InjectedProfile> out(cfg.n_fake);
  for (InjectedProfile& p : out) {
    for (std::size_t t : target_set) p.ratings.emplace_back(t, L);
    for (std::size_t v : popular) p.ratings.emplace_back(v, L);
    for (std::size_t v : sample_items(filler_pool, n_random, rng)) {
      const Moments m = model == FillerModel::per_item && !per_item[v].empty()
                            ? moments(per_item[v])
                            : global;
      p.ratings.emplace_back(v, draw_rating(rng, m, L));
    }
    std::sort(p.ratings.begin(), p.ratings.end());
  }
  return out;
}

}  // namespace

std::vector<InjectedProfile> discretize(const RatingTensor& tensor, std::size_t budget,
                                        std::span<const std::size_t> force_targets,
                                        std::vector<std::string>* warnings) {
  const std::size_t vc = tensor.candidates.size();
  const std::size_t L = tensor.values.cols();
  if (tensor.values.rows() != tensor.n_fake * vc)
    throw nk::ContractViolation("discretize: tensor rows do not match n_fake * |candidates|");
  if (budget < force_targets.size())
    throw nk::ContractViolation("discretize: budget smaller than the forced targets");
  if (budget > vc && warnings)
    warnings->push_back("only " + std::to_string(vc) + " candidates for a budget of " +
                        std::to_string(budget) + "; every candidate is rated");

  std::vector<InjectedProfile> out(tensor.n_fake);
  for (std::size_t k = 0; k < tensor.n_fake; ++k) {
    struct Choice {
      std::size_t item;
      int rating;
      double confidence;
    };
    std::vector<Choice> choices;
    for (std::size_t c = 0; c < vc; ++c) {
      const std::size_t row = k * vc + c;
      std::size_t best = 0;
      for (std::size_t l = 1; l < L; ++l)
        if (tensor.values.at(row, l) > tensor.values.at(row, best)) best = l;
      choices.push_back({tensor.candidates[c], static_cast<int>(best) + 1,
                         tensor.values.at(row, best)});
    }
    InjectedProfile& p = out[k];
    std::unordered_set<std::size_t> taken;
    for (std::size_t t : force_targets)
      if (taken.insert(t).second) p.ratings.emplace_back(t, static_cast<int>(L));
    std::stable_sort(choices.begin(), choices.end(), [](const Choice& a, const Choice& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return a.item < b.item;
    });
    for (const Choice& ch : choices) {
      if (p.ratings.size() >= budget) break;
      if (taken.insert(ch.item).second) p.ratings.emplace_back(ch.item, ch.rating);
    }
    std::sort(p.ratings.begin(), p.ratings.end());
  }
  return out;
}

std::vector<InjectedProfile> random_attack(const graph::RatingGraph& g, const BaselineConfig& cfg) {
  return build_profiles(g, cfg, FillerModel::global, 0);
}

std::vector<InjectedProfile> average_attack(const graph::RatingGraph& g, const BaselineConfig& cfg) {
  return build_profiles(g, cfg, FillerModel::per_item, 0);
}

std::vector<InjectedProfile> popular_attack(const graph::RatingGraph& g, const BaselineConfig& cfg) {
  const std::size_t fillers = cfg.budget >= cfg.targets.size() ? cfg.budget - cfg.targets.size() : 0;
  const auto n_popular =
      static_cast<std::size_t>(std::lround(cfg.popular_share * static_cast<double>(fillers)));
  return build_profiles(g, cfg, FillerModel::global, n_popular);
}

std::vector<std::string> fake_user_ids(const graph::RatingGraph& g, std::size_t n) {
  std::vector<std::string> ids;
  char buf[32];
  for (std::size_t k = 1; ids.size() < n; ++k) {
    std::snprintf(buf, sizeof buf, "inj%04zu", k);
    if (!g.find_user(buf)) ids.emplace_back(buf);
  }
  return ids;
}

graph::RatingGraph inject(const graph::RatingGraph& g, std::span<const std::string> ids,
                          std::span<const InjectedProfile> profiles) {
  if (ids.size() != profiles.size())
    throw nk::ContractViolation("inject: one id per profile required");
  std::vector<graph::Edge> edges;
  for (std::size_t k = 0; k < profiles.size(); ++k)
    for (const auto& [item, rating] : profiles[k].ratings) edges.push_back({k, item, rating});
  const std::vector<graph::UserLabel> labels(ids.size(), graph::UserLabel::injected_unlabeled);
  return graph::add_users(g, ids, labels, edges);
}

void write_profiles(std::ostream& out, const graph::RatingGraph& g,
                    std::span<const std::string> ids, std::span<const InjectedProfile> profiles) {
  if (ids.size() != profiles.size())
    throw nk::ContractViolation("write_profiles: one id per profile required");
  out << "fake_user_id,item_id,rating\n";
  for (std::size_t k = 0; k < profiles.size(); ++k)
    for (const auto& [item, rating] : profiles[k].ratings)
      out << ids[k] << ',' << g.item_id(item) << ',' << rating << '\n';
}

LoadedProfiles read_profiles(std::istream& in, const graph::RatingGraph& g) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw graph::ParseError(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "fake_user_id,item_id,rating")
    throw graph::ParseError(1, "expected header 'fake_user_id,item_id,rating', got '" + line + "'");
  LoadedProfiles out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(','), c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
      throw graph::ParseError(line_no, "expected 3 fields");
    const std::string uid = line.substr(0, c1), iid = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string_view rtext = std::string_view(line).substr(c2 + 1);
    int rating = 0;
    auto [ptr, ec] = std::from_chars(rtext.data(), rtext.data() + rtext.size(), rating);
    if (ec != std::errc() || ptr != rtext.data() + rtext.size())
      throw graph::ParseError(line_no, "rating '" + std::string(rtext) + "' is not an integer");
    if (rating < 1 || rating > g.levels())
      throw graph::ValidationError("line " + std::to_string(line_no) + ": rating outside [1," +
                                   std::to_string(g.levels()) + "]");
    const auto item = g.find_item(iid);
    if (!item)
      throw graph::ValidationError("line " + std::to_string(line_no) + ": unknown item '" + iid + "'");
    if (uid.empty() || g.find_user(uid))
      throw graph::ValidationError("line " + std::to_string(line_no) + ": fake user id '" + uid +
                                   "' is empty or already in the graph");
    auto it = std::find(out.ids.begin(), out.ids.end(), uid);
    if (it == out.ids.end()) {
      out.ids.push_back(uid);
      out.profiles.emplace_back();
      it = out.ids.end() - 1;
    }
    auto& ratings = out.profiles[static_cast<std::size_t>(it - out.ids.begin())].ratings;
    for (const auto& r : ratings)
      if (r.first == *item)
        throw graph::ValidationError("line " + std::to_string(line_no) + ": duplicate rating of '" +
                                     iid + "' by '" + uid + "'");
    ratings.emplace_back(*item, rating);
  }
  return out;
}

LoadedProfiles load_profiles(const std::filesystem::path& path, const graph::RatingGraph& g) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_profiles(in, g);
}

}  // namespace shillforge::attack
