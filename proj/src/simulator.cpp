#include "ecosim/simulator.hpp"

#include <fmt/format.h>

#include "ecosim/errors.hpp"
#include "ecosim/random.hpp"
#include "ecosim/topology.hpp"

namespace ecosim {

namespace {

class Accumulator {
 public:
  void add(int round, double rmse, double compute, double transmission) {
    compute_ += compute;
    transmission_ += transmission;
    records_.push_back({round, rmse, compute, transmission, compute_, transmission_, compute_ + transmission_});
  }

  void finish(SimulationResult& result, double initial_rmse) {
    result.final_breakdown = EnergyBreakdown::of(compute_, transmission_);
    result.final_rmse = records_.empty() ? initial_rmse : records_.back().rmse;
    result.records = std::move(records_);
  }

 private:
  double compute_ = 0.0;
  double transmission_ = 0.0;
  std::vector<RoundRecord> records_;
};

ParamVector initial_global(const Scenario& s, const Predictor& model) {
  return model.initial_params(derive_seed({s.seed, stream::kInit}), s.energy.bits_per_param);
}

}  // namespace

SimulationResult simulate_cl(const Scenario& scenario, const SimulationOptions&) {
  validate(scenario);
  const EnergyParams& e = scenario.energy;
  const std::vector<ClientState> clients = make_clients(scenario);
  const Dataset holdout = make_holdout(scenario);
  const Predictor model = make_predictor(scenario.learning);

  SimulationResult result;
  result.scenario_name = scenario.name;
  result.architecture = Architecture::Centralized;
  result.client_ledgers.resize(clients.size());

  Dataset pooled;
  pooled.reserve(static_cast<std::size_t>(scenario.total_samples()));
  for (const auto& c : clients) pooled.insert(pooled.end(), c.dataset.begin(), c.dataset.end());

  ParamVector params = initial_global(scenario, model);
  result.model_bits = params.bit_size();
  const double initial_rmse = rmse(model, params, holdout);
  Accumulator acc;

  // Round 0: every sensor ships its raw data to the data center once.
  double uplink = 0.0;
  for (const auto& c : clients) {
    const double kwh = e.alpha * c.dataset_bits * e.e_uplink_per_bit;
    result.client_ledgers[static_cast<std::size_t>(c.id)].push_back({0, 0.0, kwh, 0.0});
    uplink += kwh;
  }
  acc.add(0, initial_rmse, 0.0, uplink);

  const SgdConfig config{1, scenario.learning.batch_size, scenario.learning.learning_rate};
  const std::uint64_t shuffle_seed = client_stream_seed(scenario.seed, 0);
  for (int t = 1; t <= scenario.rounds; ++t) {
    params = sgd_train(model, std::move(params), pooled, config, shuffle_seed,
                       static_cast<std::uint64_t>(t - 1))
                 .final_params;
    acc.add(t, rmse(model, params, holdout), e.gamma * e.e0_compute, 0.0);
  }

  acc.finish(result, initial_rmse);
  result.final_params = std::move(params);
  return result;
}

SimulationResult simulate_fl(const Scenario& scenario, const SimulationOptions& options) {
  validate(scenario);
  const EnergyParams& e = scenario.energy;
  const LearningParams& l = scenario.learning;
  std::vector<ClientState> clients = make_clients(scenario);
  const Dataset holdout = make_holdout(scenario);
  const Predictor model = make_predictor(l);
  const int K = scenario.num_sensors;

  SimulationResult result;
  result.scenario_name = scenario.name;
  result.architecture = Architecture::Federated;

  ParamVector global = initial_global(scenario, model);
  const auto model_bits = static_cast<double>(global.bit_size());
  result.model_bits = global.bit_size();
  const double initial_rmse = rmse(model, global, holdout);
  Accumulator acc;

  std::vector<char> is_selected(static_cast<std::size_t>(K));
  for (int t = 1; t <= scenario.rounds; ++t) {
    const std::vector<int> selected = select_clients(K, l.client_fraction, t, scenario.seed);
    std::fill(is_selected.begin(), is_selected.end(), 0);
    for (int id : selected) is_selected[static_cast<std::size_t>(id)] = 1;

    global = fedavg_round(global, clients, selected, model, l, scenario.seed, t, {options.threads});

    double compute = e.gamma * e.beta * e.e0_compute;  // server aggregation
    double transmission = 0.0;
    for (int k = 0; k < K; ++k) {
      const bool sel = is_selected[static_cast<std::size_t>(k)] != 0;
      LedgerEntry entry{t, 0.0, 0.0, 0.0};
      if (sel || !e.downlink_selected_only) entry.downlink_kwh = model_bits * e.gamma * e.e_downlink_per_bit;
      if (sel || !e.compute_selected_only)
        entry.compute_kwh = l.local_epochs * e.ek_for(static_cast<std::size_t>(k));
      if (sel) entry.uplink_kwh = model_bits * e.e_uplink_per_bit;
      compute += entry.compute_kwh;
      transmission += entry.downlink_kwh + entry.uplink_kwh;
      clients[static_cast<std::size_t>(k)].energy_ledger.push_back(entry);
    }
    acc.add(t, rmse(model, global, holdout), compute, transmission);
    result.schedule.per_round_selected.push_back(selected);
  }

  acc.finish(result, initial_rmse);
  result.final_params = std::move(global);
  for (auto& c : clients) result.client_ledgers.push_back(std::move(c.energy_ledger));
  return result;
}

SimulationResult simulate(const Scenario& scenario, const SimulationOptions& options) {
  return scenario.architecture == Architecture::Centralized ? simulate_cl(scenario, options)
                                                            : simulate_fl(scenario, options);
}

Comparison compare(const Scenario& scenario, const SimulationOptions& options) {
  Comparison c{simulate_cl(scenario, options), simulate_fl(scenario, options), 0.0};
  const double cl = c.cl.final_breakdown.total_kwh;
  const double fl = c.fl.final_breakdown.total_kwh;
  c.savings_fraction = (cl == 0.0 && fl == 0.0) ? 0.0 : 1.0 - fl / cl;
  return c;
}

EnergyParams calibrated_energy(const Scenario& scenario, const CalibrationResult& calibration) {
  validate(scenario);
  if (scenario.rounds < 1) throw ValidationError("topology.rounds", "calibration needs at least one round");
  EnergyParams e = scenario.energy;
  if (e.gamma <= 0.0) throw ValidationError("energy.gamma", "calibration needs gamma > 0");
  const double K = scenario.num_sensors;
  const double n = scenario.rounds;
  const double m = selection_size(scenario.num_sensors, scenario.learning.client_fraction);

  const double cl_budget = calibration.cl_kwh_per_sensor * K;
  const double cl_trans = e.alpha * K * e.dataset_bits_per_sensor * e.e_uplink_per_bit;
  if (cl_trans > cl_budget)
    throw ValidationError("energy.e_uplink_per_bit",
                          fmt::format("CL raw-data uplink ({} kWh) exceeds the calibrated total ({} kWh)",
                                      cl_trans, cl_budget));
  e.e0_compute = (cl_budget - cl_trans) / (e.gamma * n);

  const double model_bits = static_cast<double>(make_predictor(scenario.learning).param_count()) *
                            e.bits_per_param;
  const double uploads = n * m;
  const double broadcasts = e.downlink_selected_only ? n * m : n * K;
  const double fl_trans = model_bits * (broadcasts * e.gamma * e.e_downlink_per_bit + uploads * e.e_uplink_per_bit);
  const double server = e.gamma * n * e.beta * e.e0_compute;
  const double fl_budget = calibration.fl_kwh_per_sensor * K;
  const double local_epochs = n * (e.compute_selected_only ? m : K) * scenario.learning.local_epochs;
  const double ek = (fl_budget - fl_trans - server) / local_epochs;
  if (ek < 0.0)
    throw ValidationError("energy.beta",
                          fmt::format("FL transmission and aggregation ({} kWh) exceed the calibrated total ({} kWh)",
                                      fl_trans + server, fl_budget));
  e.ek_compute = {ek};
  return e;
}

}  // namespace ecosim
