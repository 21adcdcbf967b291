#pragma once

#include <string>
#include <vector>

#include "ecosim/energy_model.hpp"
#include "ecosim/learning.hpp"
#include "ecosim/scenario.hpp"

namespace ecosim {

struct RoundRecord {
  int round_index = 0;
  double rmse = 0.0;
  double compute_kwh = 0.0;
  double transmission_kwh = 0.0;
  double cumulative_compute_kwh = 0.0;
  double cumulative_transmission_kwh = 0.0;
  // cumulative_compute_kwh + cumulative_transmission_kwh
  double cumulative_total_kwh = 0.0;
};

struct SimulationResult {
  std::string scenario_name;
  Architecture architecture = Architecture::Federated;
  std::vector<RoundRecord> records;
  EnergyBreakdown final_breakdown;
  double final_rmse = 0.0;
  ParamVector final_params;
  std::uint64_t model_bits = 0;
  SelectionSchedule schedule;  // empty for CL
  std::vector<std::vector<LedgerEntry>> client_ledgers;
};

struct SimulationOptions {
  unsigned threads = 1;
};

/// Round 0 charges the one-time raw-data uplink; rounds 1..n each train one
/// epoch over the pooled data at gamma * E0. Holdout RMSE after every round.
SimulationResult simulate_cl(const Scenario& scenario, const SimulationOptions& options = {});

/// Rounds 1..n: select, broadcast, local training, upload, aggregate.
/// No round-0 record.
SimulationResult simulate_fl(const Scenario& scenario, const SimulationOptions& options = {});

/// Dispatches on scenario.architecture.
SimulationResult simulate(const Scenario& scenario, const SimulationOptions& options = {});

struct Comparison {
  SimulationResult cl;
  SimulationResult fl;
  double savings_fraction = 0.0;  // 1 - FL total / CL total
};

/// Runs both architectures with the same seed; CL epochs equal FL rounds.
/// When both totals are zero the saving is 0.
Comparison compare(const Scenario& scenario, const SimulationOptions& options = {});

/// Energy parameters under which simulate_cl and simulate_fl spend
/// cl_kwh_per_sensor * K and fl_kwh_per_sensor * K in total. The scenario's
/// link coefficients, dataset size, gamma, alpha and beta are kept; E0 and a
/// shared E_k absorb the remainder. Throws ValidationError if transmission
/// alone exceeds the calibrated budget or rounds == 0.
EnergyParams calibrated_energy(const Scenario& scenario, const CalibrationResult& calibration);

}  // namespace ecosim
