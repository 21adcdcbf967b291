#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ecosim/cli.hpp"
#include "ecosim/learning.hpp"
#include "ecosim/report.hpp"
#include "ecosim/topology.hpp"

using namespace ecosim;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ecosim_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kScenario = R"([topology]
name = "site"
architecture = "fl"
num_sensors = 4
rounds = 6
seed = 3

[energy]
dataset_bits_per_sensor = 2e6

[learning]
client_fraction = 0.5
samples_per_client = 30
model_kind = "small_mlp"
hidden_dim = 3
input_dim = 4
)";

fs::path write_scenario(const fs::path& dir, const std::string& text = kScenario) {
  const fs::path p = dir / "s.toml";
  write_file(p, text);
  return p;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("version") {
  const Run r = cli({"version"});
  CHECK(r.code == 0);
  CHECK(r.out == "ecosim " + std::string(kToolVersion) + "\n");
}

TEST_CASE("usage errors exit 1") {
  CHECK(cli({}).code == kExitConfigError);
  CHECK(cli({"frobnicate"}).code == kExitConfigError);
  CHECK(cli({"simulate"}).code == kExitConfigError);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("simulate writes byte-identical outputs for the same seed") {
  const fs::path dir = fresh_dir("determinism");
  const auto scenario = write_scenario(dir);
  REQUIRE(cli({"simulate", "--scenario", scenario.string(), "--arch", "fl", "--seed", "7", "--out",
               (dir / "a").string()})
              .code == 0);
  REQUIRE(cli({"simulate", "--scenario", scenario.string(), "--arch", "fl", "--seed", "7", "--out",
               (dir / "b").string(), "--threads", "3"})
              .code == 0);
  const std::string a = read_file(dir / "a" / "site_fl_rounds.csv");
  CHECK(a == read_file(dir / "b" / "site_fl_rounds.csv"));
  CHECK(read_file(dir / "a" / "site_fl_model.bin") == read_file(dir / "b" / "site_fl_model.bin"));

  const auto rows = csv_rows(a);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == std::vector<std::string>{"round", "rmse", "compute_kwh", "transmission_kwh", "cumulative_kwh"});
  CHECK(a.find('\r') == std::string::npos);

  const auto summary = nlohmann::json::parse(read_file(dir / "a" / "site_fl_summary.json"));
  CHECK(summary["architecture"] == "federated");
  CHECK(summary["scenario"]["topology"]["seed"] == 7);
  CHECK(summary["schedule"].size() == 6);
  const double total = summary["final_breakdown"]["total_kwh"];
  CHECK(format_number(total) == rows.back()[4]);

  const auto manifest = nlohmann::json::parse(read_file(dir / "a" / "site_fl_manifest.json"));
  CHECK(manifest["tool_version"] == std::string(kToolVersion));
  CHECK(manifest["output_paths"].size() == 3);
  CHECK(manifest["command_line"].get<std::string>().find("--seed 7") != std::string::npos);
  CHECK(manifest["scenario_digest"].get<std::string>().size() == 64);

  std::istringstream bin(read_file(dir / "a" / "site_fl_model.bin"));
  const ParamVector params = read_params(bin);
  CHECK(params.size() == 3 * 4 + 3 + 3 + 1);
}

TEST_CASE("simulate reports a missing scenario by path") {
  const Run r = cli({"simulate", "--scenario", "/no/such/place.toml"});
  CHECK(r.code == kExitConfigError);
  CHECK(r.err.find("/no/such/place.toml") != std::string::npos);
}

TEST_CASE("simulate rejects invalid configuration with exit 1") {
  const fs::path dir = fresh_dir("invalid");
  const auto bad = write_scenario(dir, "[learning]\nclient_fraction = 0\n");
  const Run r = cli({"simulate", "--scenario", bad.string(), "--out", dir.string()});
  CHECK(r.code == kExitConfigError);
  CHECK(r.err.find("learning.client_fraction") != std::string::npos);
}

TEST_CASE("simulate exits 2 on divergence") {
  const fs::path dir = fresh_dir("diverge");
  const auto s = write_scenario(dir, "[topology]\nrounds = 40\n[learning]\nlearning_rate = 1e6\n");
  const Run r = cli({"simulate", "--scenario", s.string(), "--out", dir.string()});
  CHECK(r.code == kExitNumericalError);
  CHECK(r.err.find("diverged") != std::string::npos);
}

TEST_CASE("zero rounds: FL has only a header, CL keeps the round-0 uplink row") {
  const fs::path dir = fresh_dir("zero");
  const auto s = write_scenario(dir);
  REQUIRE(cli({"simulate", "--scenario", s.string(), "--rounds", "0", "--arch", "fl", "--out", dir.string()}).code == 0);
  REQUIRE(cli({"simulate", "--scenario", s.string(), "--rounds", "0", "--arch", "cl", "--out", dir.string()}).code == 0);
  CHECK(read_file(dir / "site_fl_rounds.csv") == "round,rmse,compute_kwh,transmission_kwh,cumulative_kwh\n");
  const auto cl = csv_rows(read_file(dir / "site_cl_rounds.csv"));
  REQUIRE(cl.size() == 2);
  CHECK(cl[1][0] == "0");
  CHECK(cl[1][2] == "0");
  CHECK(cl[1][3] == format_number(4 * 2e6 * 1e-9));
}

TEST_CASE("output directory falls back to the environment variable") {
  const fs::path dir = fresh_dir("env");
  const auto s = write_scenario(dir);
  ::setenv("ECOSIM_OUTPUT_DIR", (dir / "from_env").c_str(), 1);
  const Run r = cli({"simulate", "--scenario", s.string()});
  ::unsetenv("ECOSIM_OUTPUT_DIR");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "from_env" / "site_fl_rounds.csv"));
}

TEST_CASE("JSON scenario is equivalent to the text one") {
  const fs::path dir = fresh_dir("json");
  const auto text = write_scenario(dir);
  const fs::path json = dir / "s.json";
  save_scenario(load_scenario(text), json);
  REQUIRE(cli({"simulate", "--scenario", text.string(), "--out", (dir / "t").string()}).code == 0);
  REQUIRE(cli({"simulate", "--scenario", json.string(), "--out", (dir / "j").string()}).code == 0);
  CHECK(read_file(dir / "t" / "site_fl_rounds.csv") == read_file(dir / "j" / "site_fl_rounds.csv"));
}

TEST_CASE("scenario digest tracks content") {
  const Scenario s = parse_scenario_text(kScenario);
  CHECK(scenario_digest(s) == scenario_digest(parse_scenario_text(kScenario)));
  CHECK(scenario_digest(s) == scenario_digest(parse_scenario_text(to_text(s))));
  CHECK(scenario_digest(s) != scenario_digest(with_override(s, "seed", "4")));
  CHECK(scenario_digest(s) != scenario_digest(with_override(s, "gamma", "0.81")));
}

TEST_CASE("calibrate on the shipped sites") {
  const fs::path dir = fresh_dir("calibrate");
  const Run r = cli({"calibrate", "--sites", ECOSIM_SOURCE_DIR "/data/table1.csv", "--out", (dir / "c.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Kassel") != std::string::npos);
  const auto cal = parse_calibration_json(read_file(dir / "c.json"));
  CHECK(cal.cl_kwh_per_sensor == doctest::Approx(0.695).epsilon(1e-3));
  CHECK(cal.fl_kwh_per_sensor == doctest::Approx(0.2007).epsilon(1e-3));
  CHECK(cal.max_relative_error < 0.01);
  CHECK(cal.per_site_residuals.size() == 4);
}

TEST_CASE("calibrate input errors") {
  const fs::path dir = fresh_dir("calibrate_bad");
  write_file(dir / "empty.csv", "");
  CHECK(cli({"calibrate", "--sites", (dir / "empty.csv").string(), "--out", (dir / "x.json").string()}).code == 1);
  write_file(dir / "bad.csv", "site,sensors,cl_kwh,fl_kwh\nA,ten,1,1\n");
  CHECK(cli({"calibrate", "--sites", (dir / "bad.csv").string(), "--out", (dir / "x.json").string()}).code == 1);

  write_file(dir / "one.csv", "site,sensors,cl_kwh,fl_kwh\nsolo,100,50,20\n");
  REQUIRE(cli({"calibrate", "--sites", (dir / "one.csv").string(), "--out", (dir / "one.json").string()}).code == 0);
  const auto cal = parse_calibration_json(read_file(dir / "one.json"));
  CHECK(cal.cl_kwh_per_sensor == 0.5);
  CHECK(cal.fl_kwh_per_sensor == 0.2);
  CHECK(cal.max_relative_error == 0.0);
}

TEST_CASE("sweep rounds 1..50") {
  const fs::path dir = fresh_dir("sweep_rounds");
  const auto s = write_scenario(dir);
  const Run r = cli({"sweep", "--scenario", s.string(), "--param", "rounds", "--values", "1:50", "--out",
                     (dir / "sw.csv").string(), "--threads", "2"});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(read_file(dir / "sw.csv"));
  REQUIRE(rows.size() == 51);
  CHECK(rows[0] == std::vector<std::string>{"parameter", "cl_total_kwh", "fl_total_kwh", "cl_rmse", "fl_rmse",
                                            "savings_fraction"});
  for (std::size_t i = 2; i < rows.size(); ++i) {
    CHECK(rows[i][0] == std::to_string(i));
    CHECK(std::stod(rows[i][1]) > std::stod(rows[i - 1][1]));
    CHECK(std::stod(rows[i][2]) > std::stod(rows[i - 1][2]));
  }
}

TEST_CASE("sweep over a single value matches simulate") {
  const fs::path dir = fresh_dir("sweep_single");
  const auto s = write_scenario(dir);
  REQUIRE(cli({"sweep", "--scenario", s.string(), "--param", "topology.rounds", "--values", "6", "--out",
               (dir / "sw.csv").string()})
              .code == 0);
  REQUIRE(cli({"simulate", "--scenario", s.string(), "--arch", "cl", "--out", dir.string()}).code == 0);
  REQUIRE(cli({"simulate", "--scenario", s.string(), "--arch", "fl", "--out", dir.string()}).code == 0);
  const auto sweep = csv_rows(read_file(dir / "sw.csv"));
  const auto cl = csv_rows(read_file(dir / "site_cl_rounds.csv"));
  const auto fl = csv_rows(read_file(dir / "site_fl_rounds.csv"));
  REQUIRE(sweep.size() == 2);
  CHECK(sweep[1][1] == cl.back()[4]);
  CHECK(sweep[1][2] == fl.back()[4]);
  CHECK(sweep[1][3] == cl.back()[1]);
  CHECK(sweep[1][4] == fl.back()[1]);
}

TEST_CASE("sweep rejects unknown parameters") {
  const fs::path dir = fresh_dir("sweep_unknown");
  const auto s = write_scenario(dir);
  const Run r = cli({"sweep", "--scenario", s.string(), "--param", "temperature", "--values", "1,2", "--out",
                     (dir / "sw.csv").string()});
  CHECK(r.code == kExitConfigError);
  CHECK(r.err.find("temperature") != std::string::npos);
  CHECK(cli({"sweep", "--scenario", s.string(), "--param", "rounds", "--values", "5:1", "--out",
             (dir / "sw.csv").string()})
            .code == kExitConfigError);
}

TEST_CASE("sweep over sensor counts with calibration recovers the site measurements") {
  const fs::path dir = fresh_dir("sweep_sites");
  const auto s = write_scenario(dir, "[topology]\nrounds = 20\n[learning]\nsamples_per_client = 5\n");
  REQUIRE(cli({"calibrate", "--sites", ECOSIM_SOURCE_DIR "/data/table1.csv", "--out", (dir / "c.json").string()})
              .code == 0);
  REQUIRE(cli({"sweep", "--scenario", s.string(), "--param", "num_sensors", "--values", "208,1847,1290,572",
               "--calibration", (dir / "c.json").string(), "--out", (dir / "sw.csv").string()})
              .code == 0);
  const auto rows = csv_rows(read_file(dir / "sw.csv"));
  REQUIRE(rows.size() == 5);
  const double cl[] = {144.6, 1283.9, 896.7, 397.6};
  const double fl[] = {41.7, 370.8, 259.0, 114.8};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(std::stod(rows[i + 1][1]) - cl[i]) / cl[i] < 0.01);
    CHECK(std::abs(std::stod(rows[i + 1][2]) - fl[i]) / fl[i] < 0.01);
  }
}
