#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsq/datasets.hpp"
#include "rsq/executor.hpp"

namespace rsq {

enum class AlphaMode {
  linear,     // alpha0 * (1 - t/N)
  recursive,  // alpha_t = alpha_{t-1} * (1 - t/N)
};

/// Decay of the auxiliary-loss weight from alpha0 at t = 0 down to 0 at
/// t = total. The linear closed form is the default; the recursive reading
/// collapses much faster and is kept for comparison.
struct AlphaSchedule {
  double alpha0 = 0.3;
  int total = 50;
  AlphaMode mode = AlphaMode::linear;

  /// Throws DomainError outside [0, total].
  double at(int t) const;
};

struct LossBreakdown {
  double main_loss = 0;
  double branch_loss = 0;
  double alpha = 0;
  double total = 0;  // main_loss + alpha * branch_loss
};

/// total = l0 + alpha * ls; the main branch carries an implicit weight of 1.
LossBreakdown combined_loss(double l0, double ls, double alpha);

/// Node ids a trainer needs from a built graph. aux_loss may be empty for
/// branch-free graphs (probe stacks, ablations).
struct LossTaps {
  std::string input_id;
  std::string main_loss;
  std::string aux_loss;
  std::string main_logits;
};

template <std::floating_point T>
struct NetworkLossResult {
  LossBreakdown loss;
  ForwardResult<T> fwd;
};

/// One supervised step's forward + backward: batch-mean main and branch
/// losses, total weighted by alpha_at(t), gradients seeded {main: 1,
/// branch: alpha}. Zeroes the store's gradients first.
template <std::floating_point T>
NetworkLossResult<T> network_loss(const Graph& g, ParamStore<T>& params, const LossTaps& taps,
                                  const Tensor<T>& batch, std::span<const int> labels,
                                  const AlphaSchedule& sched, int t, uint64_t seed,
                                  RunMode mode = RunMode::train);

struct GradientProbeReport {
  double threshold = 0;
  int epochs = 0;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> layer_means;  // shallow -> deep
  std::optional<std::string> recommended_insertion;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Initializes conv weights from Gaussian(0, 0.01) with zero biases, runs
/// `epochs` backprop passes without ever updating a weight, and averages
/// |weight gradient| per conv layer (double precision). Recommends inserting
/// an auxiliary classifier after the shallowest layer whose mean falls below
/// the threshold. epochs must lie in [10, 50].
GradientProbeReport gradient_probe(const Graph& g, const std::vector<std::string>& conv_ids,
                                   const LossTaps& taps, const Dataset& data, int epochs,
                                   double threshold, uint64_t seed, int batch = 8);

}  // namespace rsq
