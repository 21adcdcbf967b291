#include "ecosim/learning.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <thread>

#include "ecosim/errors.hpp"
#include "ecosim/random.hpp"

namespace ecosim {

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Binary parameter format

namespace {

constexpr char kMagic[4] = {'E', 'C', 'P', 'V'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  if constexpr (std::is_floating_point_v<T>) {
    static_assert(sizeof(T) == 4);
    put_le(out, std::bit_cast<std::uint32_t>(value));
    return;
  } else {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  }
}

template <typename T>
T get_le(std::istream& in) {
  if constexpr (std::is_floating_point_v<T>) {
    return std::bit_cast<T>(get_le<std::uint32_t>(in));
  } else {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParseError("truncated parameter file");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
    return value;
  }
}

}  // namespace

void write_params(std::ostream& out, const ParamVector& params) {
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, params.values.size());
  put_le<std::uint32_t>(out, params.bits_per_param);
  for (double v : params.values) put_le<float>(out, static_cast<float>(v));
}

ParamVector read_params(std::istream& in) {
  char magic[4];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw ParseError("not a parameter file (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kFormatVersion) throw ParseError(fmt::format("unsupported parameter file version {}", version));
  const auto count = get_le<std::uint64_t>(in);
  ParamVector params;
  params.bits_per_param = get_le<std::uint32_t>(in);
  if (count > (std::uint64_t{1} << 32)) throw ParseError("implausible parameter count");
  params.values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) params.values.push_back(get_le<float>(in));
  return params;
}

// ---------------------------------------------------------------------------
// Predictor

Predictor::Predictor(ModelKind kind, int input_dim, int hidden_dim)
    : kind_(kind), input_dim_(input_dim), hidden_dim_(kind == ModelKind::Linear ? 0 : hidden_dim) {
  if (input_dim_ < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (kind_ == ModelKind::SmallMLP && hidden_dim_ < 1)
    throw std::invalid_argument("hidden_dim must be >= 1 for small_mlp");
}

std::size_t Predictor::param_count() const noexcept {
  const auto d = static_cast<std::size_t>(input_dim_);
  const auto h = static_cast<std::size_t>(hidden_dim_);
  return kind_ == ModelKind::Linear ? d + 1 : h * d + h + h + 1;
}

void Predictor::check_sizes(std::span<const double> params, std::span<const double> x) const {
  if (params.size() != param_count())
    throw DimensionError(fmt::format("expected {} parameters, got {}", param_count(), params.size()));
  if (x.size() != static_cast<std::size_t>(input_dim_))
    throw DimensionError(fmt::format("expected input of size {}, got {}", input_dim_, x.size()));
}

double Predictor::predict(std::span<const double> params, std::span<const double> x) const {
  check_sizes(params, x);
  const auto d = static_cast<std::size_t>(input_dim_);
  if (kind_ == ModelKind::Linear) {
    double y = params[d];
    for (std::size_t i = 0; i < d; ++i) y += params[i] * x[i];
    return y;
  }
  const auto h = static_cast<std::size_t>(hidden_dim_);
  const double* w1 = params.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  double y = w2[h];  // b2
  for (std::size_t j = 0; j < h; ++j) {
    double z = b1[j];
    for (std::size_t i = 0; i < d; ++i) z += w1[j * d + i] * x[i];
    y += w2[j] * std::tanh(z);
  }
  return y;
}

double Predictor::loss(std::span<const double> params, std::span<const Sample> batch) const {
  if (batch.empty()) throw std::invalid_argument("loss of an empty batch");
  double sum = 0.0;
  for (const auto& s : batch) {
    const double r = predict(params, s.x) - s.y;
    sum += r * r;
  }
  return sum / static_cast<double>(batch.size());
}

double Predictor::loss_and_gradient(std::span<const double> params, std::span<const Sample> batch,
                                    std::vector<double>& grad) const {
  if (batch.empty()) throw std::invalid_argument("gradient of an empty batch");
  grad.assign(param_count(), 0.0);
  const auto d = static_cast<std::size_t>(input_dim_);
  const double scale = 2.0 / static_cast<double>(batch.size());
  double sum = 0.0;

  if (kind_ == ModelKind::Linear) {
    for (const auto& s : batch) {
      const double r = predict(params, s.x) - s.y;
      sum += r * r;
      for (std::size_t i = 0; i < d; ++i) grad[i] += scale * r * s.x[i];
      grad[d] += scale * r;
    }
    return sum / static_cast<double>(batch.size());
  }

  const auto h = static_cast<std::size_t>(hidden_dim_);
  const double* w1 = params.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  double* g_w1 = grad.data();
  double* g_b1 = g_w1 + h * d;
  double* g_w2 = g_b1 + h;
  std::vector<double> act(h);
  for (const auto& s : batch) {
    check_sizes(params, s.x);
    double y = w2[h];
    for (std::size_t j = 0; j < h; ++j) {
      double z = b1[j];
      for (std::size_t i = 0; i < d; ++i) z += w1[j * d + i] * s.x[i];
      act[j] = std::tanh(z);
      y += w2[j] * act[j];
    }
    const double r = y - s.y;
    sum += r * r;
    const double dy = scale * r;
    g_w2[h] += dy;
    for (std::size_t j = 0; j < h; ++j) {
      g_w2[j] += dy * act[j];
      const double dz = dy * w2[j] * (1.0 - act[j] * act[j]);
      g_b1[j] += dz;
      for (std::size_t i = 0; i < d; ++i) g_w1[j * d + i] += dz * s.x[i];
    }
  }
  return sum / static_cast<double>(batch.size());
}

ParamVector Predictor::initial_params(std::uint64_t seed, std::uint32_t bits_per_param) const {
  Rng rng(seed);
  ParamVector p;
  p.bits_per_param = bits_per_param;
  p.values.resize(param_count());
  auto fill = [&](std::size_t first, std::size_t count, int fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = first; i < first + count; ++i) p.values[i] = rng.uniform(-0.5, 0.5) * scale;
  };
  const auto d = static_cast<std::size_t>(input_dim_);
  if (kind_ == ModelKind::Linear) {
    fill(0, d + 1, input_dim_);
  } else {
    const auto h = static_cast<std::size_t>(hidden_dim_);
    fill(0, h * d + h, input_dim_);
    fill(h * d + h, h + 1, hidden_dim_);
  }
  return p;
}

Predictor make_predictor(const LearningParams& learning) {
  return Predictor(learning.model_kind, learning.input_dim, learning.hidden_dim);
}

// ---------------------------------------------------------------------------
// Data

SyntheticDataset generate_dataset(std::uint64_t seed, std::size_t num_samples, int input_dim,
                                  double noise_std) {
  if (num_samples < 1) throw std::invalid_argument("generate_dataset needs at least one sample");
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  SyntheticDataset out;
  Rng truth(derive_seed({seed, 0}));
  out.true_weights.resize(static_cast<std::size_t>(input_dim));
  for (double& w : out.true_weights) w = truth.uniform(-1.0, 1.0);
  out.true_bias = truth.uniform(-1.0, 1.0);

  Rng rng(derive_seed({seed, 1}));
  out.samples.resize(num_samples);
  for (auto& s : out.samples) {
    s.x.resize(static_cast<std::size_t>(input_dim));
    double y = out.true_bias;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      s.x[i] = rng.uniform(-1.0, 1.0);
      y += out.true_weights[i] * s.x[i];
    }
    // Drawn unconditionally so noise_std does not change the x stream.
    const double noise = rng.normal();
    s.y = y + noise_std * noise;
  }
  return out;
}

// ---------------------------------------------------------------------------
// SGD

TrainReport sgd_train(const Predictor& model, ParamVector params, std::span<const Sample> data,
                      const SgdConfig& config, std::uint64_t shuffle_seed, std::uint64_t first_epoch) {
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (data.empty()) throw std::invalid_argument("sgd_train needs data");
  if (params.size() != model.param_count())
    throw DimensionError(fmt::format("model expects {} parameters, got {}", model.param_count(), params.size()));

  TrainReport report;
  std::vector<std::size_t> order(data.size());
  std::vector<Sample> batch;
  std::vector<double> grad;
  const auto B = static_cast<std::size_t>(config.batch_size);

  for (int e = 0; e < config.epochs; ++e) {
    const std::uint64_t epoch = first_epoch + static_cast<std::uint64_t>(e);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed({shuffle_seed, stream::kShuffle, epoch}));
    rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t stop = std::min(start + B, order.size());
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);
      const double loss = model.loss_and_gradient(params.values, batch, grad);
      if (!std::isfinite(loss))
        throw DivergenceError(fmt::format("non-finite loss in epoch {} (learning rate {})", epoch + 1,
                                          config.learning_rate));
      loss_sum += loss * static_cast<double>(batch.size());
      for (std::size_t i = 0; i < grad.size(); ++i) params.values[i] -= config.learning_rate * grad[i];
    }
    if (!params.all_finite())
      throw DivergenceError(fmt::format("non-finite parameters after epoch {} (learning rate {})", epoch + 1,
                                        config.learning_rate));
    report.per_epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
  }
  report.epochs_run = config.epochs;
  report.final_params = std::move(params);
  return report;
}

double rmse(const Predictor& model, std::span<const double> params, std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("rmse of empty data");
  return std::sqrt(model.loss(params, data));
}

// ---------------------------------------------------------------------------
// FedAvg

int selection_size(int num_clients, double client_fraction) {
  // The epsilon keeps e.g. 0.3 * 10 = 3.0000000000000004 at 3.
  const double raw = std::ceil(client_fraction * num_clients - 1e-9);
  return std::clamp(static_cast<int>(raw), 1, num_clients);
}

std::vector<int> select_clients(int num_clients, double client_fraction, int round_index,
                                std::uint64_t seed) {
  if (num_clients < 1) throw std::invalid_argument("select_clients needs K >= 1");
  if (!(client_fraction > 0.0 && client_fraction <= 1.0))
    throw std::invalid_argument("client fraction must be in (0, 1]");
  const int m = selection_size(num_clients, client_fraction);
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  if (m < num_clients) {
    Rng rng(derive_seed({seed, stream::kSelect, static_cast<std::uint64_t>(round_index)}));
    // Partial Fisher-Yates: the first m slots are a uniform sample.
    for (int i = 0; i < m; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(num_clients - i));
      std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
    }
    ids.resize(static_cast<std::size_t>(m));
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

ParamVector aggregate_weighted(std::span<const WeightedParams> parts) {
  if (parts.empty()) throw std::invalid_argument("nothing to aggregate");
  const std::size_t len = parts.front().params->size();
  double total = 0.0;
  for (const auto& p : parts) {
    if (p.params->size() != len)
      throw DimensionError(fmt::format("parameter length mismatch: {} vs {}", p.params->size(), len));
    total += p.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("aggregation weights must sum to a positive value");
  ParamVector out;
  out.bits_per_param = parts.front().params->bits_per_param;
  out.values.assign(len, 0.0);
  for (const auto& p : parts) {
    const double w = p.weight / total;
    for (std::size_t i = 0; i < len; ++i) out.values[i] += w * p.params->values[i];
  }
  return out;
}

std::uint64_t client_stream_seed(std::uint64_t scenario_seed, int client_id) {
  return derive_seed({scenario_seed, stream::kClient, static_cast<std::uint64_t>(client_id)});
}

ParamVector fedavg_round(const ParamVector& global, std::vector<ClientState>& clients,
                         std::span<const int> selected, const Predictor& model,
                         const LearningParams& learning, std::uint64_t scenario_seed, int round_index,
                         const FedAvgOptions& options) {
  if (selected.empty()) throw std::invalid_argument("fedavg_round needs at least one selected client");
  if (round_index < 1) throw std::invalid_argument("rounds are numbered from 1");
  std::vector<int> ids(selected.begin(), selected.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("client selected twice");
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= clients.size())
      throw std::out_of_range(fmt::format("client id {} outside [0, {})", id, clients.size()));
  if (global.size() != model.param_count())
    throw DimensionError(fmt::format("global model has {} parameters, model kind expects {}", global.size(),
                                     model.param_count()));

  const SgdConfig config{learning.local_epochs, learning.batch_size, learning.learning_rate};
  const auto first_epoch =
      static_cast<std::uint64_t>(round_index - 1) * static_cast<std::uint64_t>(learning.local_epochs);

  auto train_one = [&](int id) {
    ClientState& c = clients[static_cast<std::size_t>(id)];
    c.local_params = global;  // W_k^t <- W_{t-1}
    c.local_params = sgd_train(model, std::move(c.local_params), c.dataset, config,
                               client_stream_seed(scenario_seed, id), first_epoch)
                         .final_params;
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(ids.size())));
  if (threads == 1) {
    for (int id : ids) train_one(id);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < ids.size(); i += threads) train_one(ids[i]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<WeightedParams> parts;
  parts.reserve(ids.size());
  for (int id : ids) {
    const ClientState& c = clients[static_cast<std::size_t>(id)];
    parts.push_back({static_cast<double>(c.num_samples()), &c.local_params});
  }
  return aggregate_weighted(parts);
}

}  // namespace ecosim
