#pragma once

#include <string>
#include <string_view>

#include "shillforge/evalrun/experiment.hpp"

namespace shillforge::eval {

inline constexpr std::string_view kReportSchema = "report-v1";
inline constexpr std::string_view kToolVersion = "0.1.0";

/// JSON report: resolved settings, per-seed records and the aggregate over successful
/// seeds. Reals are rounded to 6 decimals; undefined values are null.
std::string report_json(const ExperimentReport& report);

/// Config text that reproduces the report, headed by comment lines with the tool
/// version and `artifacts`.
std::string manifest_text(const ExperimentConfig& cfg, std::string_view artifacts);

}  // namespace shillforge::eval
