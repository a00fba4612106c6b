#include "rsq/executor.hpp"

#include <algorithm>

#include "rsq/kernels.hpp"
#include "rsq/rng.hpp"

namespace rsq {

namespace {

template <std::floating_point T>
std::span<const T> values_span(const Tensor<T>& t) {
  return {t.values.data(), t.values.size()};
}

template <std::floating_point T>
std::span<T> grad_span(Tensor<T>& t) {
  t.ensure_grad();
  return {t.grad.data(), t.grad.size()};
}

template <std::floating_point T>
std::span<T> values_span_mut(Tensor<T>& t) {
  return {t.values.data(), t.values.size()};
}

}  // namespace

template <std::floating_point T>
ForwardResult<T> forward(const Graph& g, const ParamStore<T>& params,
                         const std::map<std::string, Tensor<T>>& inputs, RunMode mode,
                         uint64_t seed) {
  ForwardResult<T> out;
  out.mode = mode;
  out.seed = seed;
  out.acts.resize(g.size());

  int64_t batch = -1;
  for (size_t idx : g.topo_order()) {
    const NodeSpec& n = g.node(idx);
    auto in_act = [&](size_t i) -> const Tensor<T>& { return out.acts[g.index_of(n.inputs[i])]; };
    switch (n.kind) {
      case NodeKind::input: {
        auto it = inputs.find(n.id);
        if (it == inputs.end()) throw DimensionError("missing input tensor for node '" + n.id + "'");
        const Shape& declared = g.shape_at(idx);
        const Shape& got = it->second.shape;
        if (got.c != declared.c || got.h != declared.h || got.w != declared.w)
          throw DimensionError("input '" + n.id + "' expects (c,h,w) of " + declared.str() +
                               ", got " + got.str());
        if (got.n < 1) throw DimensionError("input '" + n.id + "' has empty batch");
        if (batch < 0) batch = got.n;
        if (got.n != batch) throw DimensionError("inputs disagree on batch size");
        out.acts[idx] = it->second;
        break;
      }
      case NodeKind::conv: {
        const auto& a = n.conv_attrs();
        const auto& ps = params.at(n.id);
        out.acts[idx] =
            conv2d_forward(in_act(0), ps[0].tensor, values_span(ps[1].tensor), a.stride, a.pad);
        break;
      }
      case NodeKind::pool: {
        const auto& a = n.pool_attrs();
        out.acts[idx] = pool2d_forward(in_act(0), a.pool, a.kernel, a.stride, a.pad);
        break;
      }
      case NodeKind::gap:
        out.acts[idx] = global_avg_pool_forward(in_act(0));
        break;
      case NodeKind::relu:
        out.acts[idx] = relu_forward(in_act(0));
        break;
      case NodeKind::dropout: {
        std::vector<uint8_t> mask;
        out.acts[idx] =
            dropout_forward(in_act(0), n.dropout_attrs().rate, mode, mix_seed(seed, idx), &mask);
        if (!mask.empty()) out.dropout_masks.emplace(idx, std::move(mask));
        break;
      }
      case NodeKind::concat:
        out.acts[idx] = concat_channels_forward(in_act(0), in_act(1));
        break;
      case NodeKind::add:
        out.acts[idx] = add_elementwise_forward(in_act(0), in_act(1));
        break;
      case NodeKind::scale: {
        const auto& ps = params.at(n.id);
        out.acts[idx] =
            scale_channels_forward(in_act(0), values_span(ps[0].tensor), values_span(ps[1].tensor));
        break;
      }
      case NodeKind::softmax_loss: {
        const Tensor<T>& logits = in_act(0);
        Tensor<T> probs(logits.shape);
        const int64_t k = logits.shape.c;
        for (int64_t s = 0; s < logits.shape.n; ++s) {
          std::span<const T> row(logits.values.data() + s * k, static_cast<size_t>(k));
          std::span<T> prow(probs.values.data() + s * k, static_cast<size_t>(k));
          softmax(row, prow);
        }
        out.acts[idx] = std::move(probs);
        break;
      }
    }
    if (!out.acts[idx].all_finite())
      throw NumericError("non-finite activation at node '" + n.id + "'");
  }
  return out;
}

template <std::floating_point T>
T mean_cross_entropy(const Graph& g, const ForwardResult<T>& fwd, const std::string& loss_node,
                     std::span<const int> labels) {
  const size_t idx = g.index_of(loss_node);
  if (g.node(idx).kind != NodeKind::softmax_loss)
    throw StructuralError("node '" + loss_node + "' is not a softmax_loss output");
  const Tensor<T>& probs = fwd.acts[idx];
  if (static_cast<int64_t>(labels.size()) != probs.shape.n)
    throw DimensionError("label count != batch size");
  const int64_t k = probs.shape.c;
  T sum = T(0);
  for (int64_t s = 0; s < probs.shape.n; ++s) {
    std::span<const T> row(probs.values.data() + s * k, static_cast<size_t>(k));
    sum += cross_entropy(row, labels[static_cast<size_t>(s)]);
  }
  return sum / static_cast<T>(probs.shape.n);
}

template <std::floating_point T>
void backward(const Graph& g, ParamStore<T>& params, const ForwardResult<T>& fwd,
              const std::map<std::string, T>& loss_seeds, std::span<const int> labels) {
  for (const auto& [id, weight] : loss_seeds) {
    if (g.node(id).kind != NodeKind::softmax_loss)
      throw StructuralError("loss seed on non-loss node '" + id + "'");
    (void)weight;
  }

  std::vector<Tensor<T>> act_grads(g.size());
  for (size_t i = 0; i < g.size(); ++i) act_grads[i] = Tensor<T>(fwd.acts[i].shape);

  const std::vector<size_t> order = g.topo_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const size_t idx = *it;
    const NodeSpec& n = g.node(idx);
    auto in_grad = [&](size_t i) { return values_span_mut(act_grads[g.index_of(n.inputs[i])]); };
    auto in_act = [&](size_t i) -> const Tensor<T>& { return fwd.acts[g.index_of(n.inputs[i])]; };
    const Tensor<T>& gout = act_grads[idx];
    switch (n.kind) {
      case NodeKind::input:
        break;
      case NodeKind::conv: {
        const auto& a = n.conv_attrs();
        auto& ps = params.at(n.id);
        conv2d_backward(in_act(0), ps[0].tensor, a.stride, a.pad, gout, in_grad(0),
                        grad_span(ps[0].tensor), grad_span(ps[1].tensor));
        break;
      }
      case NodeKind::pool: {
        const auto& a = n.pool_attrs();
        pool2d_backward(in_act(0), a.pool, a.kernel, a.stride, a.pad, gout, in_grad(0));
        break;
      }
      case NodeKind::gap:
        global_avg_pool_backward(in_act(0).shape, gout, in_grad(0));
        break;
      case NodeKind::relu:
        relu_backward(in_act(0), gout, in_grad(0));
        break;
      case NodeKind::dropout: {
        auto mit = fwd.dropout_masks.find(idx);
        static const std::vector<uint8_t> kNoMask;
        dropout_backward(n.dropout_attrs().rate,
                         mit == fwd.dropout_masks.end() ? kNoMask : mit->second, gout, in_grad(0));
        break;
      }
      case NodeKind::concat:
        concat_channels_backward(in_act(0).shape, in_act(1).shape, gout, in_grad(0), in_grad(1));
        break;
      case NodeKind::add:
        add_elementwise_backward(gout, in_grad(0), in_grad(1));
        break;
      case NodeKind::scale: {
        auto& ps = params.at(n.id);
        scale_channels_backward(in_act(0), values_span(ps[0].tensor), gout, in_grad(0),
                                grad_span(ps[0].tensor), grad_span(ps[1].tensor));
        break;
      }
      case NodeKind::softmax_loss: {
        auto sit = loss_seeds.find(n.id);
        if (sit == loss_seeds.end() || sit->second == T(0)) break;
        const Tensor<T>& probs = fwd.acts[idx];
        if (static_cast<int64_t>(labels.size()) != probs.shape.n)
          throw DimensionError("label count != batch size");
        const int64_t k = probs.shape.c;
        const T w = sit->second / static_cast<T>(probs.shape.n);
        std::span<T> lgrad = in_grad(0);
        for (int64_t s = 0; s < probs.shape.n; ++s) {
          std::span<const T> prow(probs.values.data() + s * k, static_cast<size_t>(k));
          softmax_ce_grad(prow, labels[static_cast<size_t>(s)], w,
                          lgrad.subspan(static_cast<size_t>(s * k), static_cast<size_t>(k)));
        }
        break;
      }
    }
  }
  params.check_grads_finite();
}

#define RSQ_INSTANTIATE_EXECUTOR(T)                                                            \
  template ForwardResult<T> forward<T>(const Graph&, const ParamStore<T>&,                     \
                                       const std::map<std::string, Tensor<T>>&, RunMode,       \
                                       uint64_t);                                              \
  template T mean_cross_entropy<T>(const Graph&, const ForwardResult<T>&, const std::string&,  \
                                   std::span<const int>);                                      \
  template void backward<T>(const Graph&, ParamStore<T>&, const ForwardResult<T>&,             \
                            const std::map<std::string, T>&, std::span<const int>);

RSQ_INSTANTIATE_EXECUTOR(float)
RSQ_INSTANTIATE_EXECUTOR(double)

#undef RSQ_INSTANTIATE_EXECUTOR

}  // namespace rsq
