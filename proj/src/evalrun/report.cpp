#include "shillforge/evalrun/report.hpp"

#include <cmath>
#include <json.hpp>

#include "shillforge/evalrun/config.hpp"

namespace shillforge::eval {

namespace {

using Json = nlohmann::ordered_json;

Json real(double v) {
  if (!std::isfinite(v)) return nullptr;
  const double r = std::round(v * 1e6) / 1e6;
  return r == 0.0 ? 0.0 : r;  // no negative zero
}

Json reals(std::span<const double> xs) {
  Json out = Json::array();
  for (double x : xs) out.push_back(real(x));
  return out;
}

Json stat(std::span<const double> xs) {
  const Stat s = summarize(xs);
  return Json{{"mean", real(s.mean)}, {"sd", real(s.sd)}};
}

Json hit_table(const std::vector<std::vector<double>>& hr, const std::vector<std::size_t>& ks) {
  Json out = Json::object();
  for (std::size_t i = 0; i < ks.size(); ++i) {
    double mean = 0.0;
    for (double h : hr[i]) mean += h;
    mean /= static_cast<double>(hr[i].size());
    out[std::to_string(ks[i])] = Json{{"per_target", reals(hr[i])}, {"mean", real(mean)}};
  }
  return out;
}

Json seed_json(const SeedReport& s, const ExperimentConfig& cfg) {
  Json j;
  j["seed"] = s.seed;
  j["status"] = s.ok ? "ok" : "error";
  if (!s.ok) {
    j["error"] = s.error;
    return j;
  }
  j["targets"] = s.targets;
  j["injected"] = s.injected;
  Json counts = Json::object();
  for (std::size_t t = 0; t < kUserTypes; ++t)
    counts[std::string(type_name(static_cast<UserType>(t)))] = s.type_counts[t];
  j["type_counts"] = counts;
  j["hr_pre"] = hit_table(s.hr_pre, cfg.ks);
  j["hr_post"] = hit_table(s.hr_post, cfg.ks);
  j["rmse_pre"] = real(s.rmse_pre);
  j["rmse_post"] = real(s.rmse_post);
  j["auc"] = reals(s.auc);
  j["trigger_epoch"] = s.trigger_epoch ? Json(*s.trigger_epoch) : Json(nullptr);
  j["adv_loss"] = reals(s.adv_loss);
  Json curves = Json::object();
  for (std::size_t t = 0; t < kUserTypes; ++t)
    curves[std::string(type_name(static_cast<UserType>(t)))] = reals(s.type_q_fake[t]);
  j["type_q_fake"] = curves;
  return j;
}

}  // namespace

std::string report_json(const ExperimentReport& report) {
  const ExperimentConfig& cfg = report.config;
  Json j;
  j["schema"] = kReportSchema;
  j["version"] = kToolVersion;
  Json config = Json::object();
  for (const auto& [key, value] : settings(cfg)) config[key] = value;
  j["config"] = config;
  Json seeds = Json::array();
  for (const SeedReport& s : report.seeds) seeds.push_back(seed_json(s, cfg));
  j["seeds"] = seeds;

  Json summary;
  summary["seeds_ok"] = report.succeeded();
  summary["seeds_failed"] = report.seeds.size() - report.succeeded();
  Json pre = Json::object(), post = Json::object();
  for (std::size_t i = 0; i < cfg.ks.size(); ++i) {
    std::vector<double> a, b;
    for (const SeedReport& s : report.seeds)
      if (s.ok) {
        a.push_back(s.mean_hr_pre(i));
        b.push_back(s.mean_hr_post(i));
      }
    pre[std::to_string(cfg.ks[i])] = stat(a);
    post[std::to_string(cfg.ks[i])] = stat(b);
  }
  summary["hr_pre"] = pre;
  summary["hr_post"] = post;
  std::vector<double> rmse_pre, rmse_post;
  std::array<std::vector<double>, kUserTypes> final_q;
  for (const SeedReport& s : report.seeds) {
    if (!s.ok) continue;
    rmse_pre.push_back(s.rmse_pre);
    rmse_post.push_back(s.rmse_post);
    for (std::size_t t = 0; t < kUserTypes; ++t)
      if (!s.type_q_fake[t].empty() && std::isfinite(s.type_q_fake[t].back()))
        final_q[t].push_back(s.type_q_fake[t].back());
  }
  summary["rmse_pre"] = stat(rmse_pre);
  summary["rmse_post"] = stat(rmse_post);
  Json fq = Json::object();
  for (std::size_t t = 0; t < kUserTypes; ++t)
    fq[std::string(type_name(static_cast<UserType>(t)))] =
        final_q[t].empty() ? Json(nullptr) : stat(final_q[t]);
  summary["final_q_fake"] = fq;
  j["summary"] = summary;
  return j.dump(2) + "\n";
}

std::string manifest_text(const ExperimentConfig& cfg, std::string_view artifacts) {
  std::string out = "# shillforge " + std::string(kToolVersion) + " run manifest\n";
  if (!artifacts.empty()) out += "# artifacts: " + std::string(artifacts) + "\n";
  return out + format_config(cfg);
}

}  // namespace shillforge::eval
