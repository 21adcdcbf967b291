#include "ecosim/energy_model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ecosim/errors.hpp"
#include "ecosim/report.hpp"

namespace ecosim {

SelectionSchedule SelectionSchedule::full(int rounds, int num_clients) {
  std::vector<int> all(static_cast<std::size_t>(num_clients));
  for (int k = 0; k < num_clients; ++k) all[static_cast<std::size_t>(k)] = k;
  return {std::vector<std::vector<int>>(static_cast<std::size_t>(rounds), all)};
}

namespace {

void check_counts(int rounds, int num_clients) {
  if (rounds < 0) throw std::invalid_argument(fmt::format("rounds must be >= 0, got {}", rounds));
  if (num_clients < 1) throw std::invalid_argument(fmt::format("K must be >= 1, got {}", num_clients));
}

double local_compute_sum(const EnergyParams& params, int num_clients) {
  if (params.ek_compute.size() != 1 && params.ek_compute.size() != static_cast<std::size_t>(num_clients))
    throw DimensionError(fmt::format("ek_compute has {} entries for {} clients", params.ek_compute.size(),
                                     num_clients));
  double sum = 0.0;
  for (int k = 0; k < num_clients; ++k) sum += params.ek_for(static_cast<std::size_t>(k));
  return sum;
}

void check_schedule(const SelectionSchedule& schedule, int rounds, int num_clients) {
  if (schedule.rounds() != static_cast<std::size_t>(rounds))
    throw DimensionError(fmt::format("schedule covers {} rounds, expected {}", schedule.rounds(), rounds));
  for (const auto& ids : schedule.per_round_selected)
    for (int id : ids)
      if (id < 0 || id >= num_clients)
        throw DimensionError(fmt::format("scheduled client {} outside [0, {})", id, num_clients));
}

}  // namespace

EnergyBreakdown energy_cl(const EnergyParams& params, int rounds, int num_clients,
                          std::span<const double> dataset_bits) {
  check_counts(rounds, num_clients);
  if (dataset_bits.size() != static_cast<std::size_t>(num_clients))
    throw DimensionError(fmt::format("{} dataset sizes for {} clients", dataset_bits.size(), num_clients));
  const double compute = params.gamma * rounds * params.e0_compute;
  double bits = 0.0;
  for (double b : dataset_bits) bits += b;
  const double transmission = params.alpha * bits * params.e_uplink_per_bit;
  return EnergyBreakdown::of(compute, transmission);
}

double energy_fl_compute(const EnergyParams& params, int rounds, int num_clients, int local_epochs) {
  check_counts(rounds, num_clients);
  if (local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
  const double server = params.gamma * rounds * params.beta * params.e0_compute;
  const double local = static_cast<double>(rounds) * local_epochs * local_compute_sum(params, num_clients);
  return server + local;
}

double energy_fl_compute_selected(const EnergyParams& params, const SelectionSchedule& schedule,
                                  int local_epochs) {
  if (local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
  const auto rounds = static_cast<double>(schedule.rounds());
  const double server = params.gamma * rounds * params.beta * params.e0_compute;
  double local = 0.0;
  for (const auto& ids : schedule.per_round_selected)
    for (int id : ids) local += params.ek_for(static_cast<std::size_t>(id));
  return server + local_epochs * local;
}

double energy_fl_trans(const EnergyParams& params, double model_bits, int rounds, int num_clients,
                       const SelectionSchedule& schedule) {
  check_counts(rounds, num_clients);
  check_schedule(schedule, rounds, num_clients);
  if (!(model_bits >= 0.0)) throw std::invalid_argument("model_bits must be >= 0");
  double uploads = 0.0;
  for (const auto& ids : schedule.per_round_selected) uploads += static_cast<double>(ids.size());
  const double broadcasts =
      params.downlink_selected_only ? uploads : static_cast<double>(rounds) * num_clients;
  return model_bits *
         (broadcasts * params.gamma * params.e_downlink_per_bit + uploads * params.e_uplink_per_bit);
}

EnergyBreakdown energy_fl_total(const EnergyParams& params, double model_bits, int rounds, int num_clients,
                                const SelectionSchedule& schedule, int local_epochs) {
  const double transmission = energy_fl_trans(params, model_bits, rounds, num_clients, schedule);
  const double compute = params.compute_selected_only
                             ? energy_fl_compute_selected(params, schedule, local_epochs)
                             : energy_fl_compute(params, rounds, num_clients, local_epochs);
  return EnergyBreakdown::of(compute, transmission);
}

CalibrationResult calibrate(std::span<const Site> sites) {
  if (sites.empty()) throw std::invalid_argument("calibration needs at least one site");
  double kk = 0.0, k_cl = 0.0, k_fl = 0.0;
  for (const auto& s : sites) {
    if (s.sensors < 1)
      throw std::invalid_argument(fmt::format("site '{}' has {} sensors; need >= 1", s.name, s.sensors));
    const double k = s.sensors;
    kk += k * k;
    k_cl += k * s.cl_kwh;
    k_fl += k * s.fl_kwh;
  }
  CalibrationResult r;
  r.cl_kwh_per_sensor = k_cl / kk;
  r.fl_kwh_per_sensor = k_fl / kk;
  auto relative = [](double fit, double measured) {
    if (measured == 0.0) return fit == 0.0 ? 0.0 : INFINITY;
    return (fit - measured) / measured;
  };
  for (const auto& s : sites) {
    SiteResidual res{s.name, relative(r.cl_kwh_per_sensor * s.sensors, s.cl_kwh),
                     relative(r.fl_kwh_per_sensor * s.sensors, s.fl_kwh)};
    r.max_relative_error =
        std::max({r.max_relative_error, std::abs(res.cl_relative_error), std::abs(res.fl_relative_error)});
    r.per_site_residuals.push_back(std::move(res));
  }
  return r;
}

std::pair<double, double> predict_site(const CalibrationResult& result, int sensor_count) {
  return {result.cl_kwh_per_sensor * sensor_count, result.fl_kwh_per_sensor * sensor_count};
}

std::vector<Site> parse_sites_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("sites CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "site,sensors,cl_kwh,fl_kwh")
    throw ParseError("sites CSV header must be 'site,sensors,cl_kwh,fl_kwh', got '" + line + "'");

  std::vector<Site> sites;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 4) throw ParseError(fmt::format("line {}: expected 4 columns, got {}", lineno, cells.size()));

    auto number = [&](const std::string& cell, const char* column, auto& out) {
      const char* first = cell.data();
      const char* last = first + cell.size();
      auto [p, ec] = std::from_chars(first, last, out);
      if (ec != std::errc{} || p != last)
        throw ParseError(fmt::format("line {}: column {}: '{}' is not a number", lineno, column, cell));
    };
    Site s;
    s.name = cells[0];
    number(cells[1], "sensors", s.sensors);
    number(cells[2], "cl_kwh", s.cl_kwh);
    number(cells[3], "fl_kwh", s.fl_kwh);
    if (s.sensors < 1) throw ParseError(fmt::format("line {}: sensors must be >= 1", lineno));
    if (!(s.cl_kwh >= 0.0) || !(s.fl_kwh >= 0.0) || !std::isfinite(s.cl_kwh) || !std::isfinite(s.fl_kwh))
      throw ParseError(fmt::format("line {}: energies must be finite and >= 0", lineno));
    sites.push_back(std::move(s));
  }
  if (sites.empty()) throw ParseError("sites CSV has no data rows");
  return sites;
}

std::vector<Site> read_sites_csv(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception&) {
    throw ParseError("cannot read sites CSV '" + path.string() + "'");
  }
  return parse_sites_csv(text);
}

}  // namespace ecosim
