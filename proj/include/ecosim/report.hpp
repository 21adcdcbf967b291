#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ecosim/energy_model.hpp"
#include "ecosim/simulator.hpp"

namespace ecosim {

inline constexpr std::string_view kToolVersion = "0.3.0";

/// 9 significant digits, '.' separator, independent of locale.
std::string format_number(double value);

/// Header `round,rmse,compute_kwh,transmission_kwh,cumulative_kwh`.
std::string rounds_csv(const SimulationResult& result);

std::string summary_json(const Scenario& scenario, const SimulationResult& result);

std::string calibration_json(const CalibrationResult& result);
CalibrationResult parse_calibration_json(std::string_view text);

/// Plain-text residual table for terminals.
std::string residual_table(const CalibrationResult& result);

struct SweepRow {
  std::string value;
  double cl_total_kwh = 0.0;
  double fl_total_kwh = 0.0;
  double cl_rmse = 0.0;
  double fl_rmse = 0.0;
  double savings_fraction = 0.0;
};

/// Header `parameter,cl_total_kwh,fl_total_kwh,cl_rmse,fl_rmse,savings_fraction`.
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// SHA-256 of the scenario's canonical text, hex encoded.
std::string scenario_digest(const Scenario& scenario);

struct RunManifest {
  std::string command_line;
  std::string scenario_digest;
  std::string tool_version{kToolVersion};
  std::string timestamp;  // ISO-8601 UTC
  std::vector<std::string> output_paths;
};

std::string manifest_json(const RunManifest& manifest);

/// Current UTC time, or SOURCE_DATE_EPOCH when that variable is set.
std::string iso8601_now();

void write_file(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace ecosim
