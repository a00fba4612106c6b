#pragma once

#include <concepts>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rsq/graph.hpp"
#include "rsq/tensor.hpp"

namespace rsq {

/// One learnable tensor of a node, with its gradient slot (inside tensor) and
/// SGD velocity state.
template <std::floating_point T>
struct Param {
  std::string name;  // "weight" | "bias" | "gamma" | "beta"
  Tensor<T> tensor;
  std::vector<T> velocity;  // sized lazily by the optimizer
};

/// Parameters for every learnable node of a graph, kept in graph order so
/// that iteration is deterministic.
template <std::floating_point T>
class ParamStore {
 public:
  /// Zero-filled weights/biases; scale gamma starts at 1 and beta at 0, so a
  /// freshly allocated store is an identity for scale nodes.
  static ParamStore<T> allocate(const Graph& g);

  bool has(const std::string& node_id) const { return index_.contains(node_id); }
  std::vector<Param<T>>& at(const std::string& node_id);
  const std::vector<Param<T>>& at(const std::string& node_id) const;
  Param<T>* find(const std::string& node_id, std::string_view param_name);
  const Param<T>* find(const std::string& node_id, std::string_view param_name) const;

  /// Allocates (if needed) and clears every gradient slot.
  void zero_grads();
  void check_grads_finite() const;
  int64_t value_count() const;

  std::vector<std::pair<std::string, std::vector<Param<T>>>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, std::vector<Param<T>>>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, std::vector<Param<T>>>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

/// Cross-checks that the store's tensors match the graph's declared
/// hyperparameters, then returns the same report as param_count(graph).
template <std::floating_point T>
ParamCountReport param_count(const Graph& g, const ParamStore<T>& store);

}  // namespace rsq
