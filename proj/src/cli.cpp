#include "ecosim/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "ecosim/energy_model.hpp"
#include "ecosim/errors.hpp"
#include "ecosim/report.hpp"
#include "ecosim/simulator.hpp"
#include "ecosim/topology.hpp"

namespace ecosim {

namespace {

namespace fs = std::filesystem;

constexpr const char* kOutputDirEnv = "ECOSIM_OUTPUT_DIR";

fs::path resolve_output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return ".";
}

std::string join_command(const std::vector<std::string>& args) {
  std::string s = "ecosim";
  for (const auto& a : args) s += " " + a;
  return s;
}

// "a:b" or "a:b:step" expands to an inclusive integer range; anything else
// is a comma-separated list taken verbatim.
std::vector<std::string> expand_values(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() == 2 || parts.size() == 3) {
    long long v[3] = {0, 0, 1};
    bool ok = true;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      auto [p, ec] = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), v[i]);
      ok = ok && ec == std::errc{} && p == parts[i].data() + parts[i].size();
    }
    if (!ok || v[2] < 1 || v[1] < v[0]) throw ValidationError("--values", "bad range '" + spec + "'");
    std::vector<std::string> out;
    for (long long x = v[0]; x <= v[1]; x += v[2]) out.push_back(std::to_string(x));
    return out;
  }
  std::vector<std::string> out;
  std::stringstream list(spec);
  for (std::string item; std::getline(list, item, ',');)
    if (!item.empty()) out.push_back(item);
  if (out.empty()) throw ValidationError("--values", "no values given");
  return out;
}

struct SimulateArgs {
  std::string scenario;
  std::string arch;
  std::optional<int> rounds;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
};

int cmd_simulate(const SimulateArgs& a, const std::string& command_line, std::ostream& out) {
  Scenario s = load_scenario(a.scenario);
  if (!a.arch.empty()) s = with_override(s, "architecture", a.arch);
  if (a.rounds) s = with_override(s, "rounds", std::to_string(*a.rounds));
  if (a.seed) s = with_override(s, "seed", std::to_string(*a.seed));

  const SimulationResult result = simulate(s, {a.threads});
  const fs::path dir = resolve_output_dir(a.out);
  const std::string stem = fmt::format("{}_{}", s.name, s.architecture == Architecture::Centralized ? "cl" : "fl");
  const fs::path csv = dir / (stem + "_rounds.csv");
  const fs::path summary = dir / (stem + "_summary.json");
  const fs::path model = dir / (stem + "_model.bin");
  const fs::path manifest = dir / (stem + "_manifest.json");

  write_file(csv, rounds_csv(result));
  write_file(summary, summary_json(s, result));
  {
    std::ostringstream bin;
    write_params(bin, result.final_params);
    write_file(model, bin.str());
  }
  write_file(manifest, manifest_json({command_line, scenario_digest(s), std::string(kToolVersion), iso8601_now(),
                                      {csv.string(), summary.string(), model.string()}}));

  out << fmt::format("{} ({}): {} rounds, total {} kWh (compute {}, transmission {}), final rmse {}\n", s.name,
                     to_string(s.architecture), s.rounds, format_number(result.final_breakdown.total_kwh),
                     format_number(result.final_breakdown.compute_kwh),
                     format_number(result.final_breakdown.transmission_kwh), format_number(result.final_rmse));
  out << "wrote " << csv.string() << "\n";
  return kExitOk;
}

struct CalibrateArgs {
  std::string sites;
  std::string out;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const std::vector<Site> sites = read_sites_csv(a.sites);
  const CalibrationResult result = calibrate(sites);
  const fs::path path = a.out.empty() ? resolve_output_dir("") / "calibration.json" : fs::path(a.out);
  write_file(path, calibration_json(result));
  out << residual_table(result);
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

struct SweepArgs {
  std::string scenario;
  std::string param;
  std::string values;
  std::string out;
  std::string calibration;
  unsigned threads = 1;
};

int cmd_sweep(const SweepArgs& a, const std::string& command_line, std::ostream& out) {
  if (!is_scenario_key(a.param)) throw ValidationError("--param", "unknown scenario key '" + a.param + "'");
  const Scenario base = load_scenario(a.scenario);
  std::optional<CalibrationResult> calibration;
  if (!a.calibration.empty()) calibration = parse_calibration_json(read_file(a.calibration));
  const std::vector<std::string> values = expand_values(a.values);

  // Validate every point before running any of them.
  std::vector<Scenario> points;
  for (const auto& v : values) {
    Scenario s = with_override(base, a.param, v);
    if (calibration) s.energy = calibrated_energy(s, *calibration);
    points.push_back(std::move(s));
  }

  std::vector<SweepRow> rows(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  auto run = [&](std::size_t i) {
    try {
      const Comparison c = compare(points[i]);
      rows[i] = {values[i],
                 c.cl.final_breakdown.total_kwh,
                 c.fl.final_breakdown.total_kwh,
                 c.cl.final_rmse,
                 c.fl.final_rmse,
                 c.savings_fraction};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(a.threads, static_cast<unsigned>(points.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < points.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < points.size();) run(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const fs::path path = a.out.empty() ? resolve_output_dir("") / fmt::format("sweep_{}.csv", a.param)
                                      : fs::path(a.out);
  write_file(path, sweep_csv(rows));
  fs::path manifest = path;
  manifest.replace_extension(".manifest.json");
  write_file(manifest, manifest_json({command_line, scenario_digest(base), std::string(kToolVersion),
                                      iso8601_now(), {path.string()}}));
  out << fmt::format("swept {} over {} values\nwrote {}\n", a.param, rows.size(), path.string());
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy accounting for centralized vs federated learning in IoT networks", "ecosim"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run one scenario and write per-round CSV, summary and manifest");
  simulate->add_option("--scenario", sim.scenario, "Scenario file (.toml/.ini text or .json)")->required();
  simulate->add_option("--arch", sim.arch, "Architecture override")
      ->check(CLI::IsMember({"cl", "fl", "centralized", "federated"}, CLI::ignore_case));
  simulate->add_option("--rounds", sim.rounds, "Rounds override");
  simulate->add_option("--seed", sim.seed, "Seed override");
  simulate->add_option("--out", sim.out, std::string("Output directory (default $") + kOutputDirEnv + " or .)");
  simulate->add_option("--threads", sim.threads, "Client training threads")->check(CLI::PositiveNumber);

  CalibrateArgs cal;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Fit per-sensor kWh coefficients to site measurements");
  calibrate_cmd->add_option("--sites", cal.sites, "CSV with header site,sensors,cl_kwh,fl_kwh")->required();
  calibrate_cmd->add_option("--out", cal.out, "Output JSON path");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Compare CL and FL across values of one scenario key");
  sweep->add_option("--scenario", sw.scenario, "Scenario file")->required();
  sweep->add_option("--param", sw.param, "Scenario key, bare or section.key")->required();
  sweep->add_option("--values", sw.values, "Comma list or inclusive integer range a:b[:step]")->required();
  sweep->add_option("--out", sw.out, "Output CSV path");
  sweep->add_option("--calibration", sw.calibration, "Calibration JSON; re-derives E0 and E_k per point");
  sweep->add_option("--threads", sw.threads, "Concurrent scenario runs")->check(CLI::PositiveNumber);

  auto* version = app.add_subcommand("version", "Print the tool version");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  const std::string command_line = join_command(args);
  try {
    if (*simulate) return cmd_simulate(sim, command_line, out);
    if (*calibrate_cmd) return cmd_calibrate(cal, out);
    if (*sweep) return cmd_sweep(sw, command_line, out);
    if (*version) {
      out << "ecosim " << kToolVersion << "\n";
      return kExitOk;
    }
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kExitNumericalError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitConfigError;
}

}  // namespace ecosim
