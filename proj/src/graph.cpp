#include "rsq/graph.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace rsq {

namespace {

constexpr std::string_view kKindNames[] = {"input", "conv",   "pool", "gap",   "relu",
                                           "dropout", "concat", "add",  "scale", "softmax_loss"};

size_t arity_of(NodeKind k) {
  switch (k) {
    case NodeKind::input:
      return 0;
    case NodeKind::concat:
    case NodeKind::add:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

std::string_view node_kind_name(NodeKind k) { return kKindNames[static_cast<size_t>(k)]; }

NodeKind node_kind_from_name(std::string_view name) {
  for (size_t i = 0; i < std::size(kKindNames); ++i)
    if (kKindNames[i] == name) return static_cast<NodeKind>(i);
  throw FormatError("unknown node kind '" + std::string(name) + "'");
}

const InputAttrs& NodeSpec::input_attrs() const {
  if (const auto* a = std::get_if<InputAttrs>(&attrs)) return *a;
  throw StructuralError("node '" + id + "' has no input attrs");
}
const ConvAttrs& NodeSpec::conv_attrs() const {
  if (const auto* a = std::get_if<ConvAttrs>(&attrs)) return *a;
  throw StructuralError("node '" + id + "' has no conv attrs");
}
const PoolAttrs& NodeSpec::pool_attrs() const {
  if (const auto* a = std::get_if<PoolAttrs>(&attrs)) return *a;
  throw StructuralError("node '" + id + "' has no pool attrs");
}
const DropoutAttrs& NodeSpec::dropout_attrs() const {
  if (const auto* a = std::get_if<DropoutAttrs>(&attrs)) return *a;
  throw StructuralError("node '" + id + "' has no dropout attrs");
}

size_t Graph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw StructuralError("unknown node '" + id + "'");
  return it->second;
}

Shape Graph::infer_shape(const NodeSpec& spec) const {
  auto in_shape = [&](size_t i) -> const Shape& { return shapes_[index_of(spec.inputs[i])]; };
  switch (spec.kind) {
    case NodeKind::input: {
      const auto& a = spec.input_attrs();
      Shape s{1, a.channels, a.height, a.width};
      s.validate(("input node '" + spec.id + "'").c_str());
      return s;
    }
    case NodeKind::conv: {
      const auto& a = spec.conv_attrs();
      const Shape& x = in_shape(0);
      if (a.out_channels < 1)
        throw DimensionError("node '" + spec.id + "': out_channels must be >= 1");
      try {
        return Shape{x.n, a.out_channels, conv_out_extent(x.h, a.kernel, a.stride, a.pad),
                     conv_out_extent(x.w, a.kernel, a.stride, a.pad)};
      } catch (const GeometryError& e) {
        throw GeometryError("node '" + spec.id + "': " + e.what());
      }
    }
    case NodeKind::pool: {
      const auto& a = spec.pool_attrs();
      const Shape& x = in_shape(0);
      try {
        return Shape{x.n, x.c, conv_out_extent(x.h, a.kernel, a.stride, a.pad),
                     conv_out_extent(x.w, a.kernel, a.stride, a.pad)};
      } catch (const GeometryError& e) {
        throw GeometryError("node '" + spec.id + "': " + e.what());
      }
    }
    case NodeKind::gap: {
      const Shape& x = in_shape(0);
      return Shape{x.n, x.c, 1, 1};
    }
    case NodeKind::relu:
    case NodeKind::dropout:
    case NodeKind::scale:
      return in_shape(0);
    case NodeKind::concat: {
      const Shape& a = in_shape(0);
      const Shape& b = in_shape(1);
      if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw DimensionError("node '" + spec.id + "': concat inputs disagree " + a.str() + " vs " +
                             b.str());
      return Shape{a.n, a.c + b.c, a.h, a.w};
    }
    case NodeKind::add: {
      const Shape& a = in_shape(0);
      const Shape& b = in_shape(1);
      if (!(a == b))
        throw DimensionError("node '" + spec.id + "': add inputs disagree " + a.str() + " vs " +
                             b.str());
      return a;
    }
    case NodeKind::softmax_loss: {
      const Shape& x = in_shape(0);
      if (x.h != 1 || x.w != 1)
        throw DimensionError("node '" + spec.id + "': softmax_loss expects (K,1,1) input, got " +
                             x.str());
      return x;  // activation = class probabilities
    }
  }
  throw StructuralError("node '" + spec.id + "': unhandled kind");
}

void Graph::add_node(NodeSpec spec) {
  if (index_.contains(spec.id)) throw StructuralError("duplicate node id '" + spec.id + "'");
  if (spec.inputs.size() != arity_of(spec.kind))
    throw StructuralError("node '" + spec.id + "' of kind " +
                          std::string(node_kind_name(spec.kind)) + " takes " +
                          std::to_string(arity_of(spec.kind)) + " inputs, got " +
                          std::to_string(spec.inputs.size()));
  for (const auto& in : spec.inputs)
    if (!index_.contains(in))
      throw StructuralError("node '" + spec.id + "' references unknown input '" + in + "'");
  Shape s = infer_shape(spec);
  index_.emplace(spec.id, nodes_.size());
  nodes_.push_back(std::move(spec));
  shapes_.push_back(s);
}

Graph Graph::from_nodes(std::vector<NodeSpec> nodes, std::vector<std::string> outputs) {
  // Index first, order with Kahn, then rebuild through add_node so that all
  // eager checks run in a valid insertion order.
  std::unordered_map<std::string, size_t> idx;
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (idx.contains(nodes[i].id)) throw StructuralError("duplicate node id '" + nodes[i].id + "'");
    idx.emplace(nodes[i].id, i);
  }
  std::vector<size_t> indegree(nodes.size(), 0);
  std::vector<std::vector<size_t>> consumers(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& in : nodes[i].inputs) {
      auto it = idx.find(in);
      if (it == idx.end())
        throw StructuralError("node '" + nodes[i].id + "' references unknown input '" + in + "'");
      if (it->second == i) throw StructuralError("node '" + nodes[i].id + "' feeds itself");
      consumers[it->second].push_back(i);
      ++indegree[i];
    }
  }
  std::deque<size_t> ready;
  for (size_t i = 0; i < nodes.size(); ++i)
    if (indegree[i] == 0) ready.push_back(i);
  std::vector<size_t> order;
  order.reserve(nodes.size());
  while (!ready.empty()) {
    const size_t i = ready.front();
    ready.pop_front();
    order.push_back(i);
    for (size_t c : consumers[i])
      if (--indegree[c] == 0) ready.push_back(c);
  }
  if (order.size() != nodes.size()) throw StructuralError("graph contains a cycle");

  Graph g;
  for (size_t i : order) g.add_node(std::move(nodes[i]));
  for (const auto& out : outputs) g.index_of(out);
  g.outputs = std::move(outputs);
  return g;
}

std::vector<size_t> Graph::topo_order() const {
  std::vector<size_t> indegree(nodes_.size(), 0);
  std::vector<std::vector<size_t>> consumers(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i)
    for (const auto& in : nodes_[i].inputs) {
      const size_t j = index_of(in);
      consumers[j].push_back(i);
      ++indegree[i];
    }
  std::deque<size_t> ready;
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (indegree[i] == 0) ready.push_back(i);
  std::vector<size_t> order;
  order.reserve(nodes_.size());
  while (!ready.empty()) {
    const size_t i = ready.front();
    ready.pop_front();
    order.push_back(i);
    for (size_t c : consumers[i])
      if (--indegree[c] == 0) ready.push_back(c);
  }
  if (order.size() != nodes_.size()) throw StructuralError("graph contains a cycle");
  return order;
}

nlohmann::json Graph::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nlohmann::json j;
    j["id"] = n.id;
    j["kind"] = std::string(node_kind_name(n.kind));
    j["inputs"] = n.inputs;
    if (n.param_group) j["param_group"] = *n.param_group;
    switch (n.kind) {
      case NodeKind::input: {
        const auto& a = n.input_attrs();
        j["attrs"] = {{"channels", a.channels}, {"height", a.height}, {"width", a.width}};
        break;
      }
      case NodeKind::conv: {
        const auto& a = n.conv_attrs();
        j["attrs"] = {{"out_channels", a.out_channels},
                      {"kernel", a.kernel},
                      {"stride", a.stride},
                      {"pad", a.pad}};
        break;
      }
      case NodeKind::pool: {
        const auto& a = n.pool_attrs();
        j["attrs"] = {{"pool", a.pool == PoolKind::max ? "max" : "avg"},
                      {"kernel", a.kernel},
                      {"stride", a.stride},
                      {"pad", a.pad}};
        break;
      }
      case NodeKind::dropout:
        j["attrs"] = {{"rate", n.dropout_attrs().rate}};
        break;
      default:
        break;
    }
    nodes.push_back(std::move(j));
  }
  return nlohmann::json{{"nodes", std::move(nodes)}, {"outputs", outputs}};
}

Graph Graph::from_json(const nlohmann::json& j) {
  std::vector<NodeSpec> nodes;
  for (const auto& nj : j.at("nodes")) {
    NodeSpec spec;
    spec.id = nj.at("id").get<std::string>();
    spec.kind = node_kind_from_name(nj.at("kind").get<std::string>());
    spec.inputs = nj.at("inputs").get<std::vector<std::string>>();
    if (nj.contains("param_group")) spec.param_group = nj.at("param_group").get<std::string>();
    switch (spec.kind) {
      case NodeKind::input: {
        const auto& a = nj.at("attrs");
        spec.attrs = InputAttrs{a.at("channels").get<int64_t>(), a.at("height").get<int64_t>(),
                                a.at("width").get<int64_t>()};
        break;
      }
      case NodeKind::conv: {
        const auto& a = nj.at("attrs");
        spec.attrs = ConvAttrs{a.at("out_channels").get<int64_t>(), a.at("kernel").get<int>(),
                               a.at("stride").get<int>(), a.at("pad").get<int>()};
        break;
      }
      case NodeKind::pool: {
        const auto& a = nj.at("attrs");
        const std::string kind = a.at("pool").get<std::string>();
        if (kind != "max" && kind != "avg") throw FormatError("unknown pool kind '" + kind + "'");
        spec.attrs = PoolAttrs{kind == "max" ? PoolKind::max : PoolKind::avg, a.at("kernel").get<int>(),
                               a.at("stride").get<int>(), a.at("pad").get<int>()};
        break;
      }
      case NodeKind::dropout:
        spec.attrs = DropoutAttrs{nj.at("attrs").at("rate").get<double>()};
        break;
      default:
        break;
    }
    nodes.push_back(std::move(spec));
  }
  std::vector<std::string> outputs;
  if (j.contains("outputs")) outputs = j.at("outputs").get<std::vector<std::string>>();
  return from_nodes(std::move(nodes), std::move(outputs));
}

ParamCount ParamCountReport::all() const {
  return ParamCount{main.weights + branch.weights, main.biases + branch.biases};
}

ParamCountReport param_count(const Graph& g) {
  ParamCountReport rep;
  for (size_t i = 0; i < g.size(); ++i) {
    const NodeSpec& n = g.node(i);
    ParamCount pc;
    if (n.kind == NodeKind::conv) {
      const auto& a = n.conv_attrs();
      const Shape& in = g.shape_of(n.inputs[0]);
      pc.weights = a.out_channels * in.c * a.kernel * a.kernel;
      pc.biases = a.out_channels;
    } else if (n.kind == NodeKind::scale) {
      const Shape& in = g.shape_of(n.inputs[0]);
      pc.weights = in.c;  // gamma
      pc.biases = in.c;   // beta
    } else {
      continue;
    }
    rep.per_node.emplace_back(n.id, pc);
    ParamCount& group = (n.param_group && *n.param_group == "branch") ? rep.branch : rep.main;
    group.weights += pc.weights;
    group.biases += pc.biases;
  }
  return rep;
}

int64_t model_size_bytes(int64_t count, int bytes_per_value) {
  if (bytes_per_value != 4 && bytes_per_value != 8)
    throw DomainError("bytes_per_value must be 4 or 8, got " + std::to_string(bytes_per_value));
  if (count < 0) throw DomainError("negative parameter count");
  return count * bytes_per_value;
}

std::string format_bytes(int64_t bytes) {
  static constexpr struct {
    int64_t unit;
    const char* name;
  } kUnits[] = {{int64_t(1) << 30, "GiB"}, {int64_t(1) << 20, "MiB"}, {int64_t(1) << 10, "KiB"}};
  for (const auto& u : kUnits) {
    if (bytes >= u.unit) {
      std::ostringstream os;
      os.setf(std::ios::fixed);
      os.precision(2);
      os << static_cast<double>(bytes) / static_cast<double>(u.unit) << " " << u.name;
      return os.str();
    }
  }
  return std::to_string(bytes) + " B";
}

}  // namespace rsq
