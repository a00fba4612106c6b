#include "rsq/supervision.hpp"

#include <cmath>
#include <sstream>

#include "rsq/rng.hpp"

namespace rsq {

double AlphaSchedule::at(int t) const {
  if (total < 1) throw DomainError("alpha schedule total must be >= 1");
  if (t < 0 || t > total)
    throw DomainError("alpha schedule evaluated at t=" + std::to_string(t) + " outside [0, " +
                      std::to_string(total) + "]");
  if (mode == AlphaMode::linear)
    return alpha0 * (1.0 - static_cast<double>(t) / static_cast<double>(total));
  double a = alpha0;
  for (int i = 1; i <= t; ++i) a *= 1.0 - static_cast<double>(i) / static_cast<double>(total);
  return a;
}

LossBreakdown combined_loss(double l0, double ls, double alpha) {
  if (alpha < 0) throw DomainError("alpha must be >= 0");
  LossBreakdown bd;
  bd.main_loss = l0;
  bd.branch_loss = ls;
  bd.alpha = alpha;
  bd.total = l0 + alpha * ls;
  return bd;
}

template <std::floating_point T>
NetworkLossResult<T> network_loss(const Graph& g, ParamStore<T>& params, const LossTaps& taps,
                                  const Tensor<T>& batch, std::span<const int> labels,
                                  const AlphaSchedule& sched, int t, uint64_t seed, RunMode mode) {
  const double alpha = taps.aux_loss.empty() ? 0.0 : sched.at(t);
  ForwardResult<T> fwd = forward(g, params, {{taps.input_id, batch}}, mode, seed);
  const double l0 = static_cast<double>(mean_cross_entropy(g, fwd, taps.main_loss, labels));
  const double ls = taps.aux_loss.empty()
                        ? 0.0
                        : static_cast<double>(mean_cross_entropy(g, fwd, taps.aux_loss, labels));
  params.zero_grads();
  std::map<std::string, T> seeds{{taps.main_loss, T(1)}};
  if (!taps.aux_loss.empty()) seeds.emplace(taps.aux_loss, static_cast<T>(alpha));
  backward(g, params, fwd, seeds, labels);
  return {combined_loss(l0, ls, alpha), std::move(fwd)};
}

nlohmann::json GradientProbeReport::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& [id, mean] : layer_means)
    layers.push_back({{"layer", id}, {"mean_abs_weight_grad", mean}});
  nlohmann::json j{{"threshold", threshold},
                   {"epochs", epochs},
                   {"seed", seed},
                   {"layers", std::move(layers)}};
  if (recommended_insertion)
    j["recommended_insertion"] = *recommended_insertion;
  else
    j["recommended_insertion"] = nullptr;
  return j;
}

std::string GradientProbeReport::to_csv() const {
  std::ostringstream os;
  os << "layer,mean_abs_weight_grad\n";
  for (const auto& [id, mean] : layer_means) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", mean);
    os << id << "," << buf << "\n";
  }
  return os.str();
}

GradientProbeReport gradient_probe(const Graph& g, const std::vector<std::string>& conv_ids,
                                   const LossTaps& taps, const Dataset& data, int epochs,
                                   double threshold, uint64_t seed, int batch) {
  if (epochs < 10 || epochs > 50)
    throw DomainError("probe epochs must lie in [10, 50], got " + std::to_string(epochs));
  if (batch < 1) throw DomainError("probe batch must be >= 1");
  if (data.labels.empty()) throw DomainError("probe dataset is empty");

  ParamStore<double> params = ParamStore<double>::allocate(g);
  Rng init_rng(mix_seed(seed, 0xA11CE));
  for (auto& [id, plist] : params.entries())
    for (auto& p : plist)
      if (p.name == "weight")
        for (auto& v : p.tensor.values) v = init_rng.next_gaussian(0.0, 0.01);
  // biases stay zero

  const Shape in_shape = g.shape_of(taps.input_id);
  const size_t sample_size = data.sample_size();
  if (static_cast<int64_t>(data.header.channels) != in_shape.c ||
      static_cast<int64_t>(data.header.height) != in_shape.h ||
      static_cast<int64_t>(data.header.width) != in_shape.w)
    throw DimensionError("probe dataset samples do not match the graph input shape");

  std::map<std::string, double> means;
  for (const auto& id : conv_ids) means[id] = 0.0;

  for (int e = 0; e < epochs; ++e) {
    Rng pick(mix_seed(seed, 0xB000 + static_cast<uint64_t>(e)));
    Tensor<double> bt(Shape{batch, in_shape.c, in_shape.h, in_shape.w});
    std::vector<int> labels(static_cast<size_t>(batch));
    for (int i = 0; i < batch; ++i) {
      const uint32_t idx = pick.next_below(static_cast<uint32_t>(data.labels.size()));
      const auto s = data.sample(idx);
      std::copy(s.begin(), s.end(), bt.values.begin() + static_cast<int64_t>(i) * sample_size);
      labels[static_cast<size_t>(i)] = data.labels[idx];
    }
    ForwardResult<double> fwd =
        forward(g, params, {{taps.input_id, bt}}, RunMode::train, mix_seed(seed, 0xF00 + e));
    params.zero_grads();
    backward(g, params, fwd, {{taps.main_loss, 1.0}}, labels);
    for (const auto& id : conv_ids) {
      const Param<double>* w = params.find(id, "weight");
      if (!w) throw StructuralError("probe layer '" + id + "' has no weights");
      double acc = 0.0;
      for (double v : w->tensor.grad) acc += std::abs(v);
      means[id] += acc / static_cast<double>(w->tensor.grad.size());
    }
  }

  GradientProbeReport rep;
  rep.threshold = threshold;
  rep.epochs = epochs;
  rep.seed = seed;
  for (const auto& id : conv_ids) {
    const double mean = means[id] / static_cast<double>(epochs);
    rep.layer_means.emplace_back(id, mean);
    if (!rep.recommended_insertion && mean < threshold) rep.recommended_insertion = id;
  }
  return rep;
}

template NetworkLossResult<float> network_loss<float>(const Graph&, ParamStore<float>&,
                                                      const LossTaps&, const Tensor<float>&,
                                                      std::span<const int>, const AlphaSchedule&,
                                                      int, uint64_t, RunMode);
template NetworkLossResult<double> network_loss<double>(const Graph&, ParamStore<double>&,
                                                        const LossTaps&, const Tensor<double>&,
                                                        std::span<const int>, const AlphaSchedule&,
                                                        int, uint64_t, RunMode);

}  // namespace rsq
