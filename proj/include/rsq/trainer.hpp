#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rsq/datasets.hpp"
#include "rsq/rng.hpp"
#include "rsq/supervision.hpp"

namespace rsq {

struct InitBody {
  enum class Kind { xavier_uniform, gaussian };
  Kind kind = Kind::xavier_uniform;
  double stddev = 0.01;  // gaussian mode only
};

/// Body convs: fan-in scaled Xavier uniform (bound sqrt(3/fan_in)) or
/// Gaussian(0, stddev). The K-way output convs always use Gaussian(0,
/// output_std). Biases start at 0; scale layers at gamma = 1, beta = 0.
struct InitSpec {
  InitBody body{};
  double output_std = 0.01;
};

template <std::floating_point T>
ParamStore<T> init_params(const Graph& g, const InitSpec& spec,
                          std::span<const std::string> output_convs, uint64_t seed);

struct TrainConfig {
  int batch_train = 256;
  int batch_val = 128;
  int epochs = 50;
  double base_lr = 0.01;
  double lr_gamma = 0.5;
  int lr_step = 10;
  double momentum = 0.9;
  double weight_decay = 0.0;
  uint64_t seed = 42;
  Precision precision = Precision::standard;
  AlphaSchedule alpha{};
  InitSpec init{};
  int64_t max_steps = 0;  // 0 = run every epoch to completion

  void validate() const;
};

/// base_lr * lr_gamma^floor(epoch / lr_step): halving every 10 epochs yields
/// five reductions over the default 50.
double lr_at(const TrainConfig& cfg, int epoch);

/// 3x256x256 -> 3x227x227: subtract per-channel means, then crop (train:
/// uniform origin in [0,29]^2 plus a coin-flip horizontal mirror; infer:
/// center crop, no mirror).
template <std::floating_point T>
Tensor<T> preprocess_sample(const Tensor<T>& img, std::span<const double> channel_means,
                            RunMode mode, Rng& rng);

template <std::floating_point T>
Tensor<T> mirror_horizontal(const Tensor<T>& img);

/// v <- momentum*v + grad + weight_decay*w;  w <- w - lr*v.
template <std::floating_point T>
void sgd_step(ParamStore<T>& params, double lr, double momentum, double weight_decay);

struct MetricsRow {
  int epoch = 0;      // 0-based
  int64_t step = 0;   // 1-based global step
  double lr = 0;
  double alpha = 0;
  double l0 = 0;
  double ls = 0;
  double total = 0;
  double top1 = 0;    // on the training batch
  double top5 = 0;
  int64_t wall_ms = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

template <std::floating_point T>
struct TrainHooks {
  std::function<void(const ParamStore<T>&)> on_init;
  std::function<void(int epoch, const ParamStore<T>&)> on_epoch_end;
};

template <std::floating_point T>
struct TrainResult {
  std::vector<MetricsRow> metrics;
  ParamStore<T> params;
};

/// Deterministic SGD loop: seeded shuffles, per-step dropout streams,
/// lr_at/alpha-at-epoch schedules, one MetricsRow per step.
template <std::floating_point T>
TrainResult<T> train(const Graph& g, const LossTaps& taps,
                     std::span<const std::string> output_convs, const TrainConfig& cfg,
                     const Dataset& data, const TrainHooks<T>* hooks = nullptr);

/// Top-1/top-5 fractions over the dataset, infer mode; ranking ties broken by
/// the lower class index.
template <std::floating_point T>
std::pair<double, double> evaluate(const Graph& g, const ParamStore<T>& params,
                                   const LossTaps& taps, const Dataset& data, int batch);

/// Checkpoints: a JSON manifest (graph + tensor table) next to a blob of raw
/// 32-bit little-endian parameter values in store order.
template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& json_path,
                     const std::filesystem::path& bin_path, const Graph& g,
                     const ParamStore<T>& params);

template <std::floating_point T>
ParamStore<T> load_checkpoint(const std::filesystem::path& json_path, Graph* graph_out = nullptr);

}  // namespace rsq
