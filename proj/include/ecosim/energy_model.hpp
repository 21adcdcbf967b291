#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecosim/scenario.hpp"

namespace ecosim {

struct EnergyBreakdown {
  double compute_kwh = 0.0;
  double transmission_kwh = 0.0;
  double total_kwh = 0.0;

  static EnergyBreakdown of(double compute, double transmission) {
    return {compute, transmission, compute + transmission};
  }

  bool operator==(const EnergyBreakdown&) const = default;
};

/// Selected client ids for each round t = 1..n (index t - 1).
struct SelectionSchedule {
  std::vector<std::vector<int>> per_round_selected;

  std::size_t rounds() const noexcept { return per_round_selected.size(); }
  /// Every client in every one of `rounds` rounds.
  static SelectionSchedule full(int rounds, int num_clients);
};

/// E_CL(n) = gamma * n * E0 + alpha * sum_k b(eps_k) * E_up.
/// Raw data crosses the uplink once per scenario, not once per epoch.
EnergyBreakdown energy_cl(const EnergyParams& params, int rounds, int num_clients,
                          std::span<const double> dataset_bits);

/// gamma * n * beta * E0 + n * E * sum_{k=1..K} E_k.
/// Every client is charged every round regardless of selection; E is the
/// number of local epochs, each costing E_k.
double energy_fl_compute(const EnergyParams& params, int rounds, int num_clients,
                         int local_epochs = 1);

/// Alternative to energy_fl_compute that charges only the selected clients:
/// gamma * n * beta * E0 + E * sum_t sum_{k in S_t} E_k.
double energy_fl_compute_selected(const EnergyParams& params, const SelectionSchedule& schedule,
                                  int local_epochs = 1);

/// b(W) * [ n * K * gamma * E_down + sum_t |S_t| * E_up ].
/// With params.downlink_selected_only the broadcast term becomes
/// sum_t |S_t| * gamma * E_down. Throws DimensionError if the schedule
/// does not have `rounds` entries or names an id outside [0, K).
double energy_fl_trans(const EnergyParams& params, double model_bits, int rounds,
                       int num_clients, const SelectionSchedule& schedule);

/// Compute plus transmission. Honours params.compute_selected_only.
EnergyBreakdown energy_fl_total(const EnergyParams& params, double model_bits, int rounds,
                                int num_clients, const SelectionSchedule& schedule,
                                int local_epochs = 1);

struct Site {
  std::string name;
  int sensors = 0;
  double cl_kwh = 0.0;
  double fl_kwh = 0.0;
};

struct SiteResidual {
  std::string site;
  double cl_relative_error = 0.0;  // (fit - measured) / measured
  double fl_relative_error = 0.0;
};

struct CalibrationResult {
  double cl_kwh_per_sensor = 0.0;
  double fl_kwh_per_sensor = 0.0;
  double max_relative_error = 0.0;
  std::vector<SiteResidual> per_site_residuals;
};

/// Least-squares fit of E = c * K through the origin, separately for CL
/// and FL. Throws std::invalid_argument on an empty list or a site with
/// fewer than one sensor.
CalibrationResult calibrate(std::span<const Site> sites);

/// (cl_kwh, fl_kwh) predicted for `sensor_count` sensors.
std::pair<double, double> predict_site(const CalibrationResult& result, int sensor_count);

/// Reads `site,sensors,cl_kwh,fl_kwh` CSV. Throws ParseError.
std::vector<Site> read_sites_csv(const std::filesystem::path& path);
std::vector<Site> parse_sites_csv(std::string_view text);

}  // namespace ecosim
