#include "shillforge/evalrun/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <istream>
#include <sstream>

namespace shillforge::eval {

namespace {

struct BadValue {
  std::string reason;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw BadValue{"'" + std::string(s) + "' is not a valid number"};
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) throw BadValue{"'" + std::string(s) + "' is not finite"};
  return v;
}

std::string real_text(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string out(buf, ptr);
  if (out.find_first_of(".e") == std::string::npos) out += ".0";
  return out;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw BadValue{"'" + std::string(s) + "' is not true or false"};
}

template <typename T>
std::vector<T> parse_list(std::string_view s) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = trim(s.substr(start, comma == std::string_view::npos ? s.size() - start : comma - start));
    out.push_back(parse_number<T>(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string list_text(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

struct Entry {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;

  std::string name() const { return section + "." + key; }
};

// Accessors are generic lambdas returning a reference, usable on const and mutable configs.
template <typename Access>
Entry real(std::string section, std::string key, Access acc) {
  return {std::move(section), std::move(key), [acc](const ExperimentConfig& c) { return real_text(acc(c)); },
          [acc](ExperimentConfig& c, std::string_view v) { acc(c) = parse_number<double>(v); }};
}

template <typename Access>
Entry count(std::string section, std::string key, Access acc) {
  return {std::move(section), std::move(key),
          [acc](const ExperimentConfig& c) { return std::to_string(acc(c)); },
          [acc](ExperimentConfig& c, std::string_view v) {
            acc(c) = static_cast<std::remove_reference_t<decltype(acc(c))>>(
                parse_number<unsigned long long>(v));
          }};
}

template <typename Access>
Entry flag(std::string section, std::string key, Access acc) {
  return {std::move(section), std::move(key),
          [acc](const ExperimentConfig& c) { return std::string(acc(c) ? "true" : "false"); },
          [acc](ExperimentConfig& c, std::string_view v) { acc(c) = parse_bool(v); }};
}

const std::vector<Entry>& schema() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back({"data", "path",
                 [](const ExperimentConfig& c) { return c.dataset ? c.dataset->string() : std::string(); },
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v.empty()) c.dataset.reset();
                   else c.dataset = std::filesystem::path(std::string(v));
                 }});
    e.push_back(count("data", "users", [](auto& c) -> auto& { return c.synthetic.n_users; }));
    e.push_back(count("data", "items", [](auto& c) -> auto& { return c.synthetic.n_items; }));
    e.push_back(count("data", "fake", [](auto& c) -> auto& { return c.synthetic.n_fake; }));
    e.push_back(real("data", "density", [](auto& c) -> auto& { return c.synthetic.density; }));
    e.push_back({"data", "levels", [](const ExperimentConfig& c) { return std::to_string(c.synthetic.levels); },
                 [](ExperimentConfig& c, std::string_view v) { c.synthetic.levels = parse_number<int>(v); }});
    e.push_back(count("data", "synth_seed", [](auto& c) -> auto& { return c.synthetic.seed; }));
    e.push_back(count("data", "min_records", [](auto& c) -> auto& { return c.min_records; }));
    e.push_back(real("data", "test_frac", [](auto& c) -> auto& { return c.test_frac; }));

    e.push_back({"experiment", "attack", [](const ExperimentConfig& c) { return std::string(to_string(c.attack)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   auto k = parse_attack(v);
                   if (!k) throw BadValue{"unknown attack '" + std::string(v) + "'"};
                   c.attack = *k;
                 }});
    e.push_back({"experiment", "defense",
                 [](const ExperimentConfig& c) { return std::string(to_string(c.defense)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   auto k = parse_defense(v);
                   if (!k) throw BadValue{"unknown defense '" + std::string(v) + "'"};
                   c.defense = *k;
                 }});
    e.push_back(real("experiment", "tau", [](auto& c) -> auto& { return c.tau; }));
    e.push_back({"experiment", "ks", [](const ExperimentConfig& c) { return list_text(c.ks); },
                 [](ExperimentConfig& c, std::string_view v) { c.ks = parse_list<std::size_t>(v); }});
    e.push_back(real("experiment", "power", [](auto& c) -> auto& { return c.power; }));
    e.push_back({"experiment", "seeds", [](const ExperimentConfig& c) { return list_text(c.seeds); },
                 [](ExperimentConfig& c, std::string_view v) { c.seeds = parse_list<std::uint64_t>(v); }});
    e.push_back(count("experiment", "targets", [](auto& c) -> auto& { return c.n_targets; }));
    e.push_back(flag("experiment", "target_degree_filter", [](auto& c) -> auto& { return c.target_degree_filter; }));

    e.push_back(count("model", "dim", [](auto& c) -> auto& { return c.dim; }));
    e.push_back(count("model", "hidden", [](auto& c) -> auto& { return c.hidden; }));

    e.push_back(count("train", "epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    e.push_back(count("train", "steps_per_epoch", [](auto& c) -> auto& { return c.train.steps_per_epoch; }));
    e.push_back(real("train", "lr", [](auto& c) -> auto& { return c.train.lr; }));
    e.push_back(real("train", "lambda", [](auto& c) -> auto& { return c.train.lambda; }));
    e.push_back(count("train", "detector_hidden", [](auto& c) -> auto& { return c.train.detector_hidden; }));
    e.push_back(flag("train", "normalize_ip", [](auto& c) -> auto& { return c.train.normalize_ip; }));
    e.push_back(real("train", "noise_scale", [](auto& c) -> auto& { return c.train.noise_scale; }));
    e.push_back(count("train", "pretrain_epochs", [](auto& c) -> auto& { return c.train.pretrain_epochs; }));
    e.push_back(real("train", "holdout_frac", [](auto& c) -> auto& { return c.holdout_frac; }));

    e.push_back(real("defense", "temperature", [](auto& c) -> auto& { return c.train.defense.temperature; }));
    e.push_back(real("defense", "p0", [](auto& c) -> auto& { return c.train.defense.p0; }));
    e.push_back(real("defense", "p1", [](auto& c) -> auto& { return c.train.defense.p1; }));
    e.push_back(real("defense", "a0", [](auto& c) -> auto& { return c.train.defense.a0; }));
    e.push_back(real("defense", "alpha", [](auto& c) -> auto& { return c.train.defense.alpha; }));
    e.push_back(real("defense", "c1", [](auto& c) -> auto& { return c.train.defense.c1_init; }));
    e.push_back(real("defense", "c2", [](auto& c) -> auto& { return c.train.defense.c2_init; }));
    e.push_back(real("defense", "decay_step", [](auto& c) -> auto& { return c.train.defense.decay_step; }));
    e.push_back(real("defense", "c1_floor", [](auto& c) -> auto& { return c.train.defense.c1_floor; }));
    e.push_back(real("defense", "c2_ceiling", [](auto& c) -> auto& { return c.train.defense.c2_ceiling; }));
    e.push_back(real("defense", "p_min", [](auto& c) -> auto& { return c.train.defense.p_min; }));

    e.push_back(count("attack", "budget", [](auto& c) -> auto& { return c.attack_cfg.budget; }));
    e.push_back(count("attack", "k1", [](auto& c) -> auto& { return c.attack_cfg.k1; }));
    e.push_back(count("attack", "k2", [](auto& c) -> auto& { return c.attack_cfg.k2; }));
    e.push_back(count("attack", "epochs", [](auto& c) -> auto& { return c.attack_cfg.epochs; }));
    e.push_back(real("attack", "lr_inner", [](auto& c) -> auto& { return c.attack_cfg.lr_inner; }));
    e.push_back(real("attack", "lr_outer", [](auto& c) -> auto& { return c.attack_cfg.lr_outer; }));
    e.push_back(count("attack", "candidate_threshold", [](auto& c) -> auto& { return c.attack_cfg.candidate_threshold; }));
    e.push_back(count("attack", "hops", [](auto& c) -> auto& { return c.attack_cfg.hops; }));
    e.push_back({"attack", "minmax",
                 [](const ExperimentConfig& c) {
                   return std::string(c.attack_cfg.scope == attack::MinMaxScope::global ? "global" : "per_row");
                 },
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "global") c.attack_cfg.scope = attack::MinMaxScope::global;
                   else if (v == "per_row") c.attack_cfg.scope = attack::MinMaxScope::per_row;
                   else throw BadValue{"minmax must be global or per_row"};
                 }});
    e.push_back(flag("attack", "force_targets", [](auto& c) -> auto& { return c.attack_cfg.force_targets; }));
    e.push_back(real("attack", "popular_share", [](auto& c) -> auto& { return c.popular_share; }));
    return e;
  }();
  return entries;
}

const Entry* find_entry(std::string_view key) {
  const Entry* bare = nullptr;
  std::size_t bare_matches = 0;
  for (const Entry& e : schema()) {
    if (e.name() == key) return &e;
    if (e.key == key) {
      bare = &e;
      ++bare_matches;
    }
  }
  return bare_matches == 1 ? bare : nullptr;
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> settings(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Entry& e : schema()) out.emplace_back(e.name(), e.get(cfg));
  return out;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError({std::string(key)}, "unknown or ambiguous key '" + std::string(key) + "'");
  try {
    e->set(cfg, trim(value));
  } catch (const BadValue& bad) {
    throw ConfigError({e->name()}, e->name() + ": " + bad.reason);
  }
}

void read_config(std::istream& in, ExperimentConfig& cfg) {
  std::vector<std::string> keys;
  std::string messages, line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (text.front() == '[') {
      if (text.back() != ']') {
        keys.push_back(text);
        messages += where + "malformed section header\n";
        continue;
      }
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      keys.push_back(text);
      messages += where + "expected key = value\n";
      continue;
    }
    const std::string key = trim(std::string_view(text).substr(0, eq));
    const std::string value = unquote(trim(std::string_view(text).substr(eq + 1)));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      apply_setting(cfg, full, value);
    } catch (const ConfigError& e) {
      keys.push_back(full);
      messages += where + e.what() + "\n";
    }
  }
  if (!keys.empty()) {
    messages.pop_back();
    throw ConfigError(std::move(keys), messages);
  }
}

std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const Entry& e : schema()) {
    if (e.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << e.section << "]\n";
      section = e.section;
    }
    const std::string value = e.get(cfg);
    const bool quote = e.section == "data" && e.key == "path";
    out << e.key << " = " << (quote ? "\"" + value + "\"" : value) << '\n';
  }
  return out.str();
}

}  // namespace shillforge::eval
