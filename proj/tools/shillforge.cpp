#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "shillforge/attack/attack.hpp"
#include "shillforge/evalrun/config.hpp"
#include "shillforge/evalrun/experiment.hpp"
#include "shillforge/evalrun/report.hpp"
#include "shillforge/graphdata/io.hpp"
#include "shillforge/graphdata/preprocess.hpp"
#include "shillforge/graphdata/synthetic.hpp"
#include "shillforge/numkernel/allocator.hpp"
#include "shillforge/recmodel/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace shillforge;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

/// Bad flags, configs or inputs; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError("input file not found: " + p.string());
}

std::vector<std::size_t> item_indices(const graph::RatingGraph& g, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  for (const std::string& id : ids) {
    auto v = g.find_item(id);
    if (!v) throw UsageError("unknown target item '" + id + "'");
    out.push_back(*v);
  }
  return out;
}

struct SynthArgs {
  graph::SyntheticSpec spec;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  try {
    a.spec.validate();
  } catch (const graph::ValidationError& e) {
    throw UsageError(e.what());
  }
  std::ostringstream csv;
  graph::write_csv(graph::synthesize(a.spec), csv);
  graph::atomic_write(a.out, csv.str());
  return kOk;
}

struct AttackArgs {
  std::string graph;
  std::string method = "metac";
  double power = 0.01;
  std::size_t budget = 15;
  std::vector<std::string> targets;
  std::size_t n_targets = 5;
  std::size_t k1 = 100;
  std::size_t epochs = 50;
  double lr_inner = 0.2;
  double lr_outer = 1e-4;
  bool force_targets = false;
  std::uint64_t seed = 1;
  std::string out;
  std::string loss_log;
};

int cmd_attack(const AttackArgs& a) {
  const bool metac = a.method == "metac";
  if (!metac && a.method != "random" && a.method != "average" && a.method != "popular")
    throw UsageError("unknown attack method '" + a.method + "'");
  if (!(a.power > 0.0 && a.power <= 1.0)) throw UsageError("--power must lie in (0,1]");
  require_file(a.graph);
  const graph::RatingGraph g = graph::load_csv(a.graph).graph;
  const std::vector<std::size_t> targets =
      a.targets.empty() ? eval::sample_targets(g, a.n_targets, true, a.seed) : item_indices(g, a.targets);
  const auto n_fake = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(a.power * static_cast<double>(g.num_users()) - 1e-9)));

  std::vector<attack::InjectedProfile> profiles;
  if (metac) {
    attack::AttackConfig cfg;
    cfg.n_fake = n_fake;
    cfg.budget = a.budget;
    cfg.targets = targets;
    cfg.k1 = a.k1;
    cfg.epochs = a.epochs;
    cfg.lr_inner = a.lr_inner;
    cfg.lr_outer = a.lr_outer;
    cfg.force_targets = a.force_targets;
    cfg.seed = a.seed;
    try {
      cfg.validate(g);
    } catch (const nk::ContractViolation& e) {
      throw UsageError(e.what());
    }
    const attack::AttackProblem problem = attack::make_problem(g, cfg);
    const attack::MetacResult res = attack::metac_optimize(problem, cfg);
    if (!a.loss_log.empty()) {
      std::ostringstream log;
      log << "epoch,adv_loss\n";
      char buf[32];
      for (std::size_t e = 0; e < res.adv_loss_log.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%.6f", res.adv_loss_log[e]);
        log << (e + 1) << ',' << buf << '\n';
      }
      graph::atomic_write(a.loss_log, log.str());
    }
    if (res.diverged) {
      std::cerr << "error: " << res.message << '\n';
      return kRuntimeError;
    }
    std::vector<std::string> warnings;
    const std::vector<std::size_t> forced = a.force_targets ? targets : std::vector<std::size_t>{};
    profiles = attack::discretize(res.tensor, a.budget, forced, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
  } else {
    attack::BaselineConfig cfg;
    cfg.n_fake = n_fake;
    cfg.budget = a.budget;
    cfg.targets = targets;
    cfg.seed = a.seed;
    if (cfg.budget < targets.size() || cfg.budget > g.num_items())
      throw UsageError("--budget must lie between the target count and the item count");
    if (a.method == "random") profiles = attack::random_attack(g, cfg);
    else if (a.method == "average") profiles = attack::average_attack(g, cfg);
    else profiles = attack::popular_attack(g, cfg);
  }
  std::ostringstream csv;
  attack::write_profiles(csv, g, attack::fake_user_ids(g, profiles.size()), profiles);
  graph::atomic_write(a.out, csv.str());
  return kOk;
}

struct RunArgs {
  std::string config;
  std::vector<std::string> sets;
  std::size_t jobs = 1;
  std::string out_dir = "run";
  bool artifacts = false;
};

eval::ExperimentConfig load_run_config(const RunArgs& a) {
  eval::ExperimentConfig cfg;
  try {
    if (!a.config.empty()) {
      require_file(a.config);
      std::ifstream in(a.config);
      eval::read_config(in, cfg);
    }
    std::vector<std::string> bad;
    std::string messages;
    for (const std::string& s : a.sets) {
      const auto eq = s.find('=');
      try {
        if (eq == std::string::npos) throw eval::ConfigError({s}, "--set expects key=value, got '" + s + "'");
        eval::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
      } catch (const eval::ConfigError& e) {
        bad.insert(bad.end(), e.keys().begin(), e.keys().end());
        messages += std::string(messages.empty() ? "" : "\n") + e.what();
      }
    }
    if (!bad.empty()) throw eval::ConfigError(bad, messages);
    if (const char* env = std::getenv("SHILLFORGE_SEED"); env && *env)
      eval::apply_setting(cfg, "experiment.seeds", env);
    cfg.validate();
  } catch (const eval::ConfigError& e) {
    std::string keys;
    for (const std::string& k : e.keys()) keys += (keys.empty() ? "" : ", ") + k;
    throw UsageError(std::string(e.what()) + "\noffending keys: " + keys);
  } catch (const nk::ContractViolation& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int cmd_run(const RunArgs& a) {
  const eval::ExperimentConfig cfg = load_run_config(a);
  if (cfg.dataset) require_file(*cfg.dataset);
  const eval::ExperimentReport report = eval::run_experiment(cfg, a.jobs);
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  std::string artifacts = "report.json";
  for (const eval::SeedReport& s : report.seeds) {
    if (!s.ok) {
      std::cerr << "seed " << s.seed << " failed: " << s.error << '\n';
      continue;
    }
    const std::string tag = "seed" + std::to_string(s.seed);
    std::ostringstream traj;
    detect::write_trajectory(traj, s.q_fake, s.user_ids, s.user_types);
    graph::atomic_write(dir / ("trajectory_" + tag + ".csv"), traj.str());
    artifacts += ", trajectory_" + tag + ".csv";
    if (a.artifacts) {
      std::ostringstream train, profiles;
      graph::write_csv(*s.train_graph, train);
      attack::write_profiles(profiles, *s.train_graph, s.injected_ids, s.profiles);
      graph::atomic_write(dir / ("train_" + tag + ".csv"), train.str());
      graph::atomic_write(dir / ("profiles_" + tag + ".csv"), profiles.str());
      rec::save_checkpoint(*s.model, dir / ("model_" + tag + ".json"), s.train_graph->item_ids());
      artifacts += ", train_" + tag + ".csv, profiles_" + tag + ".csv, model_" + tag + ".json";
    }
  }
  graph::atomic_write(dir / "report.json", eval::report_json(report));
  graph::atomic_write(dir / "manifest.cfg", eval::manifest_text(cfg, artifacts));
  return kOk;
}

struct EvalArgs {
  std::string graph;
  std::string profiles;
  std::string checkpoint;
  std::vector<std::string> targets;
  std::vector<std::size_t> ks{10, 50};
};

int cmd_eval(const EvalArgs& a) {
  require_file(a.graph);
  require_file(a.checkpoint);
  std::vector<std::string> item_ids;
  const rec::RecParams model = rec::load_checkpoint(a.checkpoint, &item_ids);
  graph::RatingGraph g = graph::load_csv(a.graph).graph;
  // CSV rows only fix items in order of first appearance; realign them with the model.
  if (!item_ids.empty()) g = graph::reindex_items(g, item_ids);
  attack::LoadedProfiles injected;
  if (!a.profiles.empty()) {
    require_file(a.profiles);
    injected = attack::load_profiles(a.profiles, g);
  }
  const std::vector<std::size_t> targets = item_indices(g, a.targets);
  for (std::size_t k : a.ks)
    if (k == 0) throw UsageError("--k values must be positive");
  const auto hr = eval::recompute_hit_ratios(g, injected.ids, injected.profiles, model, targets, a.ks);
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < a.ks.size(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    double mean = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      row[a.targets[t]] = std::round(hr[i][t] * 1e6) / 1e6;
      mean += hr[i][t];
    }
    row["mean"] = std::round(mean / static_cast<double>(targets.size()) * 1e6) / 1e6;
    out["hr@" + std::to_string(a.ks[i])] = row;
  }
  std::cout << out.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  nk::tune_allocator();
  CLI::App app{"Shilling-attack simulation and poisoning-robust training for graph recommenders"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic rating dataset as CSV");
  s->add_option("--users", synth.spec.n_users, "Users, including inherent fakes")->capture_default_str();
  s->add_option("--items", synth.spec.n_items, "Items")->capture_default_str();
  s->add_option("--fake", synth.spec.n_fake, "Inherent fake users")->capture_default_str();
  s->add_option("--density", synth.spec.density, "Expected ratings per user")->capture_default_str();
  s->add_option("--levels", synth.spec.levels, "Rating levels")->capture_default_str();
  s->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();
  s->add_option("-o,--out", synth.out, "Output CSV")->required();

  AttackArgs atk;
  auto* a = app.add_subcommand("attack", "Craft injected profiles against a dataset");
  a->add_option("graph", atk.graph, "Dataset CSV")->required();
  a->add_option("--method", atk.method, "metac, random, average or popular")->capture_default_str();
  a->add_option("--power", atk.power, "Injected users as a share of all users")->capture_default_str();
  a->add_option("--budget", atk.budget, "Ratings per injected user")->capture_default_str();
  a->add_option("--targets", atk.targets, "Target item ids (default: sampled)")->delimiter(',');
  a->add_option("--n-targets", atk.n_targets, "Sampled targets when --targets is absent")->capture_default_str();
  a->add_option("--k1", atk.k1, "Surrogate checkpoints per epoch")->capture_default_str();
  a->add_option("--epochs", atk.epochs, "Outer epochs")->capture_default_str();
  a->add_option("--lr-inner", atk.lr_inner, "Surrogate learning rate")->capture_default_str();
  a->add_option("--lr-outer", atk.lr_outer, "Tensor learning rate")->capture_default_str();
  a->add_flag("--force-targets", atk.force_targets, "Rate every target at the top level");
  a->add_option("--seed", atk.seed, "Seed")->capture_default_str();
  a->add_option("-o,--out", atk.out, "Profiles CSV")->required();
  a->add_option("--loss-log", atk.loss_log, "Per-epoch adversarial loss CSV (metac)");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run the seeded experiment pipeline");
  r->add_option("config", run.config, "Config file (defaults when absent)");
  r->add_option("--set", run.sets, "Override, key=value (repeatable)");
  r->add_option("--jobs", run.jobs, "Seeds run in parallel")->check(CLI::PositiveNumber)->capture_default_str();
  r->add_option("-o,--out", run.out_dir, "Output directory")->capture_default_str();
  r->add_flag("--artifacts", run.artifacts, "Also write training splits, profiles and models");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Recompute hit ratios from a saved model and profiles");
  e->add_option("--graph", ev.graph, "Training split CSV")->required();
  e->add_option("--profiles", ev.profiles, "Injected profiles CSV");
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint JSON")->required();
  e->add_option("--targets", ev.targets, "Target item ids")->delimiter(',')->required();
  e->add_option("--k", ev.ks, "Cutoffs")->delimiter(',')->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*a) return cmd_attack(atk);
    if (*r) return cmd_run(run);
    if (*e) return cmd_eval(ev);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsageError;
  } catch (const graph::ParseError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsageError;
  } catch (const graph::ValidationError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsageError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
