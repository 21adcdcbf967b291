#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ecosim/scenario.hpp"

namespace ecosim {

struct Sample {
  std::vector<double> x;
  double y = 0.0;

  bool operator==(const Sample&) const = default;
};

using Dataset = std::vector<Sample>;

/// Flat model parameter vector with bit-size accounting.
struct ParamVector {
  std::vector<double> values;
  std::uint32_t bits_per_param = 32;

  std::size_t size() const noexcept { return values.size(); }
  /// b(W): parameter count times bits per parameter.
  std::uint64_t bit_size() const noexcept {
    return static_cast<std::uint64_t>(values.size()) * bits_per_param;
  }
  bool all_finite() const noexcept;

  bool operator==(const ParamVector&) const = default;
};

/// Binary layout, all little-endian:
///   magic "ECPV" (4 bytes) | version u32 = 1 | count u64 | bits_per_param u32
///   followed by `count` IEEE-754 binary32 values.
/// Values are narrowed to float on write.
void write_params(std::ostream& out, const ParamVector& params);
ParamVector read_params(std::istream& in);

/// A small differentiable regressor f(x; W) with a flat parameter layout.
///
/// Linear:   [w_0 .. w_{d-1}, b]
/// SmallMLP: [W1 (hidden x d, row-major), b1 (hidden), w2 (hidden), b2]
///           with f(x) = w2 . tanh(W1 x + b1) + b2
class Predictor {
 public:
  Predictor(ModelKind kind, int input_dim, int hidden_dim = 0);

  ModelKind kind() const noexcept { return kind_; }
  int input_dim() const noexcept { return input_dim_; }
  int hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t param_count() const noexcept;

  double predict(std::span<const double> params, std::span<const double> x) const;

  /// Mean squared error over `batch`; writes its gradient into `grad`
  /// (resized to param_count()).
  double loss_and_gradient(std::span<const double> params, std::span<const Sample> batch,
                           std::vector<double>& grad) const;

  double loss(std::span<const double> params, std::span<const Sample> batch) const;

  /// Uniform in [-0.5, 0.5] scaled by 1/sqrt(fan-in) of each layer.
  ParamVector initial_params(std::uint64_t seed, std::uint32_t bits_per_param = 32) const;

 private:
  void check_sizes(std::span<const double> params, std::span<const double> x) const;

  ModelKind kind_;
  int input_dim_;
  int hidden_dim_;
};

Predictor make_predictor(const LearningParams& learning);

struct SyntheticDataset {
  Dataset samples;
  std::vector<double> true_weights;
  double true_bias = 0.0;
};

/// y = w* . x + b* + noise_std * N(0, 1), with x ~ U[-1, 1]^d and
/// (w*, b*) ~ U[-1, 1] drawn from `seed`.
SyntheticDataset generate_dataset(std::uint64_t seed, std::size_t num_samples, int input_dim,
                                  double noise_std);

struct SgdConfig {
  int epochs = 1;
  int batch_size = 16;
  double learning_rate = 0.05;
};

struct TrainReport {
  ParamVector final_params;
  std::vector<double> per_epoch_loss;
  int epochs_run = 0;
};

/// Mini-batch SGD on mean squared error.
///
/// Epoch `first_epoch + e` shuffles with a stream derived from
/// (shuffle_seed, first_epoch + e), so training split across several calls
/// reproduces one long call exactly. The final partial batch is kept.
/// Throws DivergenceError on a non-finite loss or parameter.
TrainReport sgd_train(const Predictor& model, ParamVector params, std::span<const Sample> data,
                      const SgdConfig& config, std::uint64_t shuffle_seed,
                      std::uint64_t first_epoch = 0);

double rmse(const Predictor& model, std::span<const double> params, std::span<const Sample> data);
inline double rmse(const Predictor& model, const ParamVector& params,
                   std::span<const Sample> data) {
  return rmse(model, std::span<const double>(params.values), data);
}

struct LedgerEntry {
  int round = 0;
  double compute_kwh = 0.0;
  double uplink_kwh = 0.0;
  double downlink_kwh = 0.0;
};

struct ClientState {
  int id = 0;
  Dataset dataset;
  double dataset_bits = 0.0;  // b(eps_k)
  ParamVector local_params;
  std::vector<LedgerEntry> energy_ledger;

  std::size_t num_samples() const noexcept { return dataset.size(); }
};

/// m = max(ceil(C * K), 1) distinct ids in [0, K), sorted ascending.
/// Deterministic in (seed, round_index).
std::vector<int> select_clients(int num_clients, double client_fraction, int round_index,
                                std::uint64_t seed);

/// Number of clients select_clients returns.
int selection_size(int num_clients, double client_fraction);

struct WeightedParams {
  double weight;  // n_k
  const ParamVector* params;
};

/// sum_k (n_k / n) W_k in the given order, n = sum n_k.
/// Throws DimensionError if the vectors differ in length.
ParamVector aggregate_weighted(std::span<const WeightedParams> parts);

/// Seed from which client `id` derives every local shuffle stream.
std::uint64_t client_stream_seed(std::uint64_t scenario_seed, int client_id);

struct FedAvgOptions {
  // Worker threads for local training; 1 runs serially. Results are
  // bit-identical for any value.
  unsigned threads = 1;
};

/// One FedAvg round: every selected client starts from `global`, trains
/// E local epochs on its own data, then the n_k-weighted mean is returned.
/// Client k's epochs are numbered (round_index - 1) * E + e within its own
/// shuffle stream, so K=1, C=1 reproduces centralized training.
ParamVector fedavg_round(const ParamVector& global, std::vector<ClientState>& clients,
                         std::span<const int> selected, const Predictor& model,
                         const LearningParams& learning, std::uint64_t scenario_seed,
                         int round_index, const FedAvgOptions& options = {});

}  // namespace ecosim
