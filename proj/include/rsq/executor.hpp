#pragma once

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rsq/graph.hpp"
#include "rsq/params.hpp"

namespace rsq {

/// Activations for every node of one forward pass, indexed by node position.
/// Dropout masks are kept so backward replays exactly the forward draw.
template <std::floating_point T>
struct ForwardResult {
  std::vector<Tensor<T>> acts;
  std::unordered_map<size_t, std::vector<uint8_t>> dropout_masks;
  RunMode mode = RunMode::infer;
  uint64_t seed = 0;

  const Tensor<T>& act(const Graph& g, const std::string& id) const {
    return acts[g.index_of(id)];
  }
};

/// Computes every node once in topological order. Deterministic given seed;
/// throws NumericError if any activation comes out non-finite.
template <std::floating_point T>
ForwardResult<T> forward(const Graph& g, const ParamStore<T>& params,
                         const std::map<std::string, Tensor<T>>& inputs, RunMode mode,
                         uint64_t seed);

/// Batch-mean cross-entropy at a softmax_loss node.
template <std::floating_point T>
T mean_cross_entropy(const Graph& g, const ForwardResult<T>& fwd, const std::string& loss_node,
                     std::span<const int> labels);

/// Reverse-topological accumulation into the store's gradient slots. Each
/// softmax_loss output is seeded with weight/batch * (p - onehot); outputs
/// absent from loss_seeds contribute nothing. Call params.zero_grads() before
/// each batch — gradients accumulate.
template <std::floating_point T>
void backward(const Graph& g, ParamStore<T>& params, const ForwardResult<T>& fwd,
              const std::map<std::string, T>& loss_seeds, std::span<const int> labels);

}  // namespace rsq
