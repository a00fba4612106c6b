#include "rsq/params.hpp"

#include <cmath>

namespace rsq {

template <std::floating_point T>
ParamStore<T> ParamStore<T>::allocate(const Graph& g) {
  ParamStore<T> store;
  for (size_t i = 0; i < g.size(); ++i) {
    const NodeSpec& n = g.node(i);
    std::vector<Param<T>> params;
    if (n.kind == NodeKind::conv) {
      const auto& a = n.conv_attrs();
      const Shape& in = g.shape_of(n.inputs[0]);
      params.push_back({"weight", Tensor<T>(Shape{a.out_channels, in.c, a.kernel, a.kernel}), {}});
      params.push_back({"bias", Tensor<T>(Shape{a.out_channels, 1, 1, 1}), {}});
    } else if (n.kind == NodeKind::scale) {
      const Shape& in = g.shape_of(n.inputs[0]);
      params.push_back({"gamma", Tensor<T>(Shape{in.c, 1, 1, 1}, T(1)), {}});
      params.push_back({"beta", Tensor<T>(Shape{in.c, 1, 1, 1}), {}});
    } else {
      continue;
    }
    store.index_.emplace(n.id, store.entries_.size());
    store.entries_.emplace_back(n.id, std::move(params));
  }
  return store;
}

template <std::floating_point T>
std::vector<Param<T>>& ParamStore<T>::at(const std::string& node_id) {
  auto it = index_.find(node_id);
  if (it == index_.end()) throw StructuralError("no parameters for node '" + node_id + "'");
  return entries_[it->second].second;
}

template <std::floating_point T>
const std::vector<Param<T>>& ParamStore<T>::at(const std::string& node_id) const {
  auto it = index_.find(node_id);
  if (it == index_.end()) throw StructuralError("no parameters for node '" + node_id + "'");
  return entries_[it->second].second;
}

template <std::floating_point T>
Param<T>* ParamStore<T>::find(const std::string& node_id, std::string_view param_name) {
  auto it = index_.find(node_id);
  if (it == index_.end()) return nullptr;
  for (auto& p : entries_[it->second].second)
    if (p.name == param_name) return &p;
  return nullptr;
}

template <std::floating_point T>
const Param<T>* ParamStore<T>::find(const std::string& node_id, std::string_view param_name) const {
  auto it = index_.find(node_id);
  if (it == index_.end()) return nullptr;
  for (const auto& p : entries_[it->second].second)
    if (p.name == param_name) return &p;
  return nullptr;
}

template <std::floating_point T>
void ParamStore<T>::zero_grads() {
  for (auto& [id, params] : entries_)
    for (auto& p : params) p.tensor.zero_grad();
}

template <std::floating_point T>
void ParamStore<T>::check_grads_finite() const {
  for (const auto& [id, params] : entries_)
    for (const auto& p : params)
      for (T v : p.tensor.grad)
        if (!std::isfinite(v))
          throw NumericError("non-finite gradient in '" + id + "." + p.name + "'");
}

template <std::floating_point T>
int64_t ParamStore<T>::value_count() const {
  int64_t total = 0;
  for (const auto& [id, params] : entries_)
    for (const auto& p : params) total += static_cast<int64_t>(p.tensor.size());
  return total;
}

template <std::floating_point T>
ParamCountReport param_count(const Graph& g, const ParamStore<T>& store) {
  ParamCountReport rep = param_count(g);
  for (const auto& [id, pc] : rep.per_node) {
    const auto& params = store.at(id);
    int64_t weights = 0, biases = 0;
    for (const auto& p : params) {
      if (p.name == "weight" || p.name == "gamma")
        weights += static_cast<int64_t>(p.tensor.size());
      else
        biases += static_cast<int64_t>(p.tensor.size());
    }
    if (weights != pc.weights || biases != pc.biases)
      throw StructuralError("parameter store for '" + id + "' disagrees with the graph spec");
  }
  return rep;
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamCountReport param_count<float>(const Graph&, const ParamStore<float>&);
template ParamCountReport param_count<double>(const Graph&, const ParamStore<double>&);

}  // namespace rsq
