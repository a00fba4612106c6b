#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rsq/kernels.hpp"
#include "rsq/shape.hpp"

namespace rsq {

enum class NodeKind { input, conv, pool, gap, relu, dropout, concat, add, scale, softmax_loss };

std::string_view node_kind_name(NodeKind k);
NodeKind node_kind_from_name(std::string_view name);

struct InputAttrs {
  int64_t channels = 0, height = 0, width = 0;
};
struct ConvAttrs {
  int64_t out_channels = 0;
  int kernel = 1, stride = 1, pad = 0;
};
struct PoolAttrs {
  PoolKind pool = PoolKind::max;
  int kernel = 1, stride = 1, pad = 0;
};
struct DropoutAttrs {
  double rate = 0.5;
};

/// One layer of the network: kind, kind-specific hyperparameters and the ids
/// of the nodes feeding it. param_group partitions learnables into the main
/// and auxiliary-branch weight families.
struct NodeSpec {
  std::string id;
  NodeKind kind = NodeKind::input;
  std::vector<std::string> inputs;
  std::optional<std::string> param_group;  // "main" | "branch"
  std::variant<std::monostate, InputAttrs, ConvAttrs, PoolAttrs, DropoutAttrs> attrs;

  const InputAttrs& input_attrs() const;
  const ConvAttrs& conv_attrs() const;
  const PoolAttrs& pool_attrs() const;
  const DropoutAttrs& dropout_attrs() const;
};

/// Validated DAG of layer nodes. add_node() validates eagerly and caches the
/// inferred output shape (batch extent recorded as 1; execution substitutes
/// the runtime batch size).
class Graph {
 public:
  void add_node(NodeSpec spec);

  /// Rebuilds a graph from an arbitrarily ordered node list (JSON path);
  /// detects cycles and re-runs shape inference.
  static Graph from_nodes(std::vector<NodeSpec> nodes, std::vector<std::string> outputs);

  size_t size() const { return nodes_.size(); }
  bool has(const std::string& id) const { return index_.contains(id); }
  size_t index_of(const std::string& id) const;
  const NodeSpec& node(size_t idx) const { return nodes_[idx]; }
  const NodeSpec& node(const std::string& id) const { return nodes_[index_of(id)]; }
  std::span<const NodeSpec> nodes() const { return nodes_; }
  const Shape& shape_at(size_t idx) const { return shapes_[idx]; }
  const Shape& shape_of(const std::string& id) const { return shapes_[index_of(id)]; }

  /// Kahn's algorithm, stable by node position among ready nodes.
  /// Throws StructuralError on a cycle.
  std::vector<size_t> topo_order() const;

  nlohmann::json to_json() const;
  static Graph from_json(const nlohmann::json& j);

  std::vector<std::string> outputs;  // designated loss/logit node ids

 private:
  Shape infer_shape(const NodeSpec& spec) const;

  std::vector<NodeSpec> nodes_;
  std::vector<Shape> shapes_;
  std::unordered_map<std::string, size_t> index_;
};

struct ParamCount {
  int64_t weights = 0;
  int64_t biases = 0;
  int64_t total() const { return weights + biases; }
};

struct ParamCountReport {
  std::vector<std::pair<std::string, ParamCount>> per_node;  // learnable nodes, graph order
  ParamCount main;
  ParamCount branch;
  ParamCount all() const;
};

/// Exact scalar counts per learnable node, grouped by param_group
/// (untagged learnables count toward main).
ParamCountReport param_count(const Graph& g);

/// count * bytes_per_value; bytes_per_value must be 4 or 8.
int64_t model_size_bytes(int64_t count, int bytes_per_value);

/// Human-readable size with binary units (1 GiB = 2^30 bytes).
std::string format_bytes(int64_t bytes);

}  // namespace rsq
