#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ecosim {

enum class Architecture { Centralized, Federated };
enum class ModelKind { Linear, SmallMLP };

std::string_view to_string(Architecture arch) noexcept;
std::string_view to_string(ModelKind kind) noexcept;

/// Coefficients of the CL and FL energy-cost models. Energies are kWh,
/// per-bit link costs are kWh/bit.
struct EnergyParams {
  double gamma = 0.8;  // data-center PUE factor
  double alpha = 1.0;  // expected number of raw-dataset transmissions
  double beta = 0.1;   // server aggregation cost as a fraction of one epoch
  double e0_compute = 2.0;
  // One entry shared by every edge node, or one entry per node.
  std::vector<double> ek_compute{0.05};
  double e_uplink_per_bit = 1e-9;
  double e_downlink_per_bit = 1e-9;
  std::uint32_t bits_per_param = 32;
  double dataset_bits_per_sensor = 1e6;
  // Charge local compute only for the clients selected in a round.
  bool compute_selected_only = false;
  // Broadcast the global model only to the clients selected in a round.
  bool downlink_selected_only = false;

  double ek_for(std::size_t client) const {
    return ek_compute.size() == 1 ? ek_compute.front() : ek_compute.at(client);
  }

  bool operator==(const EnergyParams&) const = default;
};

struct LearningParams {
  double client_fraction = 1.0;
  int local_epochs = 1;
  int batch_size = 16;
  double learning_rate = 0.05;
  ModelKind model_kind = ModelKind::Linear;
  // One entry shared by every client, or one entry per client.
  std::vector<int> samples_per_client{50};
  int input_dim = 8;
  int hidden_dim = 8;
  double noise_std = 0.1;
  int holdout_samples = 200;

  int samples_for(std::size_t client) const {
    return samples_per_client.size() == 1 ? samples_per_client.front()
                                          : samples_per_client.at(client);
  }

  bool operator==(const LearningParams&) const = default;
};

struct Scenario {
  std::string name = "scenario";
  Architecture architecture = Architecture::Federated;
  int num_sensors = 1;  // K
  int rounds = 0;       // n: CL epochs or FL communication rounds
  std::uint64_t seed = 0;
  EnergyParams energy;
  LearningParams learning;

  /// Sum of samples over all K clients.
  long long total_samples() const;

  bool operator==(const Scenario&) const = default;
};

}  // namespace ecosim
