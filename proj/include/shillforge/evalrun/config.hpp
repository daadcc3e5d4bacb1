#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shillforge/evalrun/experiment.hpp"

namespace shillforge::eval {

/// Unknown keys or unparsable values; `keys()` lists every offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::vector<std::string> keys, const std::string& what)
      : std::runtime_error(what), keys_(std::move(keys)) {}
  const std::vector<std::string>& keys() const noexcept { return keys_; }

 private:
  std::vector<std::string> keys_;
};

/// Every setting as ("section.key", value) in schema order, defaults materialized.
/// Reals use the shortest text that reads back to the same double.
std::vector<std::pair<std::string, std::string>> settings(const ExperimentConfig& cfg);

/// Sets one key. A bare key ("tau") is accepted when exactly one section defines it.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Applies `[section]` headers and `key = value` lines on top of `cfg`. Blank lines and
/// `#` comments are ignored; values may be double-quoted. All errors are collected before
/// one ConfigError is thrown.
void read_config(std::istream& in, ExperimentConfig& cfg);

/// The inverse of read_config: every setting grouped by section.
std::string format_config(const ExperimentConfig& cfg);

}  // namespace shillforge::eval
