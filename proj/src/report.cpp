#include "ecosim/report.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ecosim/errors.hpp"
#include "ecosim/topology.hpp"

namespace ecosim {

using json = nlohmann::json;

std::string format_number(double value) { return fmt::format("{:.9g}", value); }

std::string rounds_csv(const SimulationResult& result) {
  std::string out = "round,rmse,compute_kwh,transmission_kwh,cumulative_kwh\n";
  for (const auto& r : result.records) {
    out += fmt::format("{},{},{},{},{}\n", r.round_index, format_number(r.rmse), format_number(r.compute_kwh),
                       format_number(r.transmission_kwh), format_number(r.cumulative_total_kwh));
  }
  return out;
}

namespace {

json breakdown_json(const EnergyBreakdown& b) {
  return {{"compute_kwh", b.compute_kwh}, {"transmission_kwh", b.transmission_kwh}, {"total_kwh", b.total_kwh}};
}

}  // namespace

std::string summary_json(const Scenario& scenario, const SimulationResult& result) {
  json j;
  j["scenario_name"] = result.scenario_name;
  j["architecture"] = std::string(to_string(result.architecture));
  j["rounds"] = scenario.rounds;
  j["model_bits"] = result.model_bits;
  j["final_rmse"] = result.final_rmse;
  j["final_breakdown"] = breakdown_json(result.final_breakdown);
  if (result.architecture == Architecture::Federated) j["schedule"] = result.schedule.per_round_selected;
  j["scenario"] = json::parse(to_json_text(scenario));
  return j.dump(2) + "\n";
}

std::string calibration_json(const CalibrationResult& result) {
  json j;
  j["cl_kwh_per_sensor"] = result.cl_kwh_per_sensor;
  j["fl_kwh_per_sensor"] = result.fl_kwh_per_sensor;
  j["max_relative_error"] = result.max_relative_error;
  json sites = json::array();
  for (const auto& r : result.per_site_residuals)
    sites.push_back({{"site", r.site}, {"cl_relative_error", r.cl_relative_error},
                     {"fl_relative_error", r.fl_relative_error}});
  j["per_site_residuals"] = std::move(sites);
  return j.dump(2) + "\n";
}

CalibrationResult parse_calibration_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    CalibrationResult r;
    r.cl_kwh_per_sensor = j.at("cl_kwh_per_sensor").get<double>();
    r.fl_kwh_per_sensor = j.at("fl_kwh_per_sensor").get<double>();
    r.max_relative_error = j.value("max_relative_error", 0.0);
    if (j.contains("per_site_residuals"))
      for (const auto& s : j.at("per_site_residuals"))
        r.per_site_residuals.push_back({s.at("site").get<std::string>(), s.at("cl_relative_error").get<double>(),
                                        s.at("fl_relative_error").get<double>()});
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed calibration JSON: ") + e.what());
  }
}

std::string residual_table(const CalibrationResult& result) {
  std::string out = fmt::format("cl_kwh_per_sensor = {}\nfl_kwh_per_sensor = {}\n",
                                format_number(result.cl_kwh_per_sensor), format_number(result.fl_kwh_per_sensor));
  out += fmt::format("{:<16} {:>14} {:>14}\n", "site", "cl_residual_%", "fl_residual_%");
  for (const auto& r : result.per_site_residuals)
    out += fmt::format("{:<16} {:>14.4f} {:>14.4f}\n", r.site, 100.0 * r.cl_relative_error,
                       100.0 * r.fl_relative_error);
  out += fmt::format("max |residual| = {:.4f} %\n", 100.0 * result.max_relative_error);
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "parameter,cl_total_kwh,fl_total_kwh,cl_rmse,fl_rmse,savings_fraction\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{},{}\n", r.value, format_number(r.cl_total_kwh), format_number(r.fl_total_kwh),
                       format_number(r.cl_rmse), format_number(r.fl_rmse), format_number(r.savings_fraction));
  return out;
}

std::string scenario_digest(const Scenario& scenario) {
  const std::string text = to_text(scenario);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::string manifest_json(const RunManifest& m) {
  json j;
  j["command_line"] = m.command_line;
  j["scenario_digest"] = m.scenario_digest;
  j["tool_version"] = m.tool_version;
  j["timestamp"] = m.timestamp;
  j["output_paths"] = m.output_paths;
  return j.dump(2) + "\n";
}

std::string iso8601_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch)
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ecosim
