#include "rsq/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rsq/archs.hpp"
#include "rsq/executor.hpp"
#include "rsq/kernels.hpp"
#include "rsq/rng.hpp"
#include "rsq/supervision.hpp"
#include "rsq/trainer.hpp"

namespace rsq {

double max_relative_error(const std::function<double()>& f, std::span<double> values,
                          std::span<const double> analytic, double eps) {
  if (values.size() != analytic.size())
    throw DimensionError("gradcheck: analytic gradient length != value length");
  if (eps <= 0) throw DomainError("gradcheck eps must be > 0");
  double worst = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double fp = f();
    values[i] = saved - eps;
    const double fm = f();
    values[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

namespace {

using D = double;

Tensor<D> random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<D> t(s);
  for (auto& v : t.values) v = rng.next_uniform(lo, hi);
  return t;
}

// Fixed random projection weights turn a tensor-valued op into a scalar loss
// whose upstream gradient is exactly those weights.
Tensor<D> projection_like(const Shape& s, Rng& rng) { return random_tensor(s, rng); }

double dot(const Tensor<D>& a, const Tensor<D>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) acc += a.values[i] * b.values[i];
  return acc;
}

ComponentCheck check_conv(const GradCheckOptions& opts, double tol) {
  Rng rng(mix_seed(opts.seed, 1));
  Tensor<D> x = random_tensor(Shape{2, 3, 5, 5}, rng);
  Tensor<D> w = random_tensor(Shape{4, 3, 3, 3}, rng);
  std::vector<D> bias(4);
  for (auto& b : bias) b = rng.next_uniform(-0.5, 0.5);
  const int stride = 1, pad = 1;
  const Tensor<D> r = projection_like(conv2d_forward<D>(x, w, bias, stride, pad).shape, rng);

  auto loss = [&]() { return dot(conv2d_forward<D>(x, w, bias, stride, pad), r); };

  Tensor<D> xg(x.shape), wg(w.shape);
  std::vector<D> bg(bias.size(), 0.0);
  conv2d_backward<D>(x, w, stride, pad, r, {xg.values.data(), xg.values.size()},
                     {wg.values.data(), wg.values.size()}, bg);
  if (opts.flip_conv_weight_grad_sign)
    for (auto& v : wg.values) v = -v;

  double worst = max_relative_error(loss, x.values, xg.values, opts.eps);
  worst = std::max(worst, max_relative_error(loss, w.values, wg.values, opts.eps));
  worst = std::max(worst, max_relative_error(loss, bias, bg, opts.eps));
  return {"conv2d", worst, tol};
}

ComponentCheck check_pool(const GradCheckOptions& opts, double tol, PoolKind kind,
                          const std::string& name) {
  Rng rng(mix_seed(opts.seed, kind == PoolKind::max ? 2 : 3));
  Tensor<D> x = random_tensor(Shape{2, 3, 6, 6}, rng);
  const int kernel = 3, stride = 2, pad = 0;
  const Tensor<D> r = projection_like(pool2d_forward(x, kind, kernel, stride, pad).shape, rng);
  auto loss = [&]() { return dot(pool2d_forward(x, kind, kernel, stride, pad), r); };
  Tensor<D> xg(x.shape);
  pool2d_backward(x, kind, kernel, stride, pad, r, {xg.values.data(), xg.values.size()});
  return {name, max_relative_error(loss, x.values, xg.values, opts.eps), tol};
}

ComponentCheck check_gap(const GradCheckOptions& opts, double tol) {
  Rng rng(mix_seed(opts.seed, 4));
  Tensor<D> x = random_tensor(Shape{2, 4, 5, 5}, rng);
  const Tensor<D> r = projection_like(Shape{2, 4, 1, 1}, rng);
  auto loss = [&]() { return dot(global_avg_pool_forward(x), r); };
  Tensor<D> xg(x.shape);
  global_avg_pool_backward(x.shape, r, {xg.values.data(), xg.values.size()});
  return {"global_avg_pool", max_relative_error(loss, x.values, xg.values, opts.eps), tol};
}

ComponentCheck check_relu(const GradCheckOptions& opts, double tol) {
  Rng rng(mix_seed(opts.seed, 5));
  // keep probes away from the kink at zero
  Tensor<D> x(Shape{2, 3, 4, 4});
  for (auto& v : x.values) {
    const double mag = rng.next_uniform(0.2, 1.0);
    v = rng.next_unit() < 0.5 ? -mag : mag;
  }
  const Tensor<D> r = projection_like(x.shape, rng);
  auto loss = [&]() { return dot(relu_forward(x), r); };
  Tensor<D> xg(x.shape);
  relu_backward(x, r, {xg.values.data(), xg.values.size()});
  return {"relu", max_relative_error(loss, x.values, xg.values, opts.eps), tol};
}

ComponentCheck check_dropout(const GradCheckOptions& opts, double tol) {
  Rng rng(mix_seed(opts.seed, 6));
  Tensor<D> x = random_tensor(Shape{2, 3, 4, 4}, rng);
  const double rate = 0.5;
  const uint64_t seed = mix_seed(opts.seed, 60);
  const Tensor<D> r = projection_like(x.shape, rng);
  std::vector<uint8_t> mask;
  (void)dropout_forward(x, rate, RunMode::train, seed, &mask);  // fixes the mask
  auto loss = [&]() {
    return dot(dropout_forward(x, rate, RunMode::train, seed, nullptr), r);
  };
  Tensor<D> xg(x.shape);
  dropout_backward(rate, mask, r, {xg.values.data(), xg.values.size()});
  return {"dropout", max_relative_error(loss, x.values, xg.values, opts.eps), tol};
}

ComponentCheck check_concat(const GradCheckOptions& opts, double tol) {
  Rng rng(mix_seed(opts.seed, 7));
  Tensor<D> a = random_tensor(Shape{2, 3, 4, 4}, rng);
  Tensor<D> b = random_tensor(Shape{2, 2, 4, 4}, rng);
  const Tensor<D> r = projection_like(Shape{2, 5, 4, 4}, rng);
  auto loss = [&]() { return dot(concat_channels_forward(a, b), r); };
  Tensor<D> ga(a.shape), gb(b.shape);
  concat_channels_backward(a.shape, b.shape, r, {ga.values.data(), ga.values.size()},
                           {gb.values.data(), gb.values.size()});
  double worst = max_relative_error(loss, a.values, ga.values, opts.eps);
  worst = std::max(worst, max_relative_error(loss, b.values, gb.values, opts.eps));
  return {"concat_channels", worst, tol};
}

ComponentCheck check_add(const GradCheckOptions& opts, double tol) {
  Rng rng(mix_seed(opts.seed, 8));
  Tensor<D> a = random_tensor(Shape{2, 3, 4, 4}, rng);
  Tensor<D> b = random_tensor(Shape{2, 3, 4, 4}, rng);
  const Tensor<D> r = projection_like(a.shape, rng);
  auto loss = [&]() { return dot(add_elementwise_forward(a, b), r); };
  Tensor<D> ga(a.shape), gb(b.shape);
  add_elementwise_backward(r, {ga.values.data(), ga.values.size()},
                           {gb.values.data(), gb.values.size()});
  double worst = max_relative_error(loss, a.values, ga.values, opts.eps);
  worst = std::max(worst, max_relative_error(loss, b.values, gb.values, opts.eps));
  return {"add_elementwise", worst, tol};
}

ComponentCheck check_scale(const GradCheckOptions& opts, double tol) {
  Rng rng(mix_seed(opts.seed, 9));
  Tensor<D> x = random_tensor(Shape{2, 3, 4, 4}, rng);
  std::vector<D> gamma(3), beta(3);
  for (auto& v : gamma) v = rng.next_uniform(0.5, 1.5);
  for (auto& v : beta) v = rng.next_uniform(-0.5, 0.5);
  const Tensor<D> r = projection_like(x.shape, rng);
  auto loss = [&]() { return dot(scale_channels_forward<D>(x, gamma, beta), r); };
  Tensor<D> xg(x.shape);
  std::vector<D> gg(3, 0.0), bg(3, 0.0);
  scale_channels_backward<D>(x, gamma, r, {xg.values.data(), xg.values.size()}, gg, bg);
  double worst = max_relative_error(loss, x.values, xg.values, opts.eps);
  worst = std::max(worst, max_relative_error(loss, gamma, gg, opts.eps));
  worst = std::max(worst, max_relative_error(loss, beta, bg, opts.eps));
  return {"scale_channels", worst, tol};
}

ComponentCheck check_softmax_ce(const GradCheckOptions& opts, double tol) {
  Rng rng(mix_seed(opts.seed, 10));
  std::vector<D> logits(6);
  for (auto& v : logits) v = rng.next_uniform(-2.0, 2.0);
  const int label = 2;
  auto loss = [&]() {
    std::vector<D> probs(logits.size());
    softmax<D>(logits, probs);
    return cross_entropy<D>(probs, label);
  };
  std::vector<D> probs(logits.size());
  softmax<D>(logits, probs);
  std::vector<D> lg(logits.size(), 0.0);
  softmax_ce_grad<D>(probs, label, 1.0, lg);
  return {"softmax_cross_entropy", max_relative_error(loss, logits, lg, opts.eps), tol};
}

}  // namespace

std::vector<ComponentCheck> primitive_grad_checks(const GradCheckOptions& opts, double tolerance) {
  std::vector<ComponentCheck> checks;
  checks.push_back(check_conv(opts, tolerance));
  checks.push_back(check_pool(opts, tolerance, PoolKind::max, "max_pool"));
  checks.push_back(check_pool(opts, tolerance, PoolKind::avg, "avg_pool"));
  checks.push_back(check_gap(opts, tolerance));
  checks.push_back(check_relu(opts, tolerance));
  checks.push_back(check_dropout(opts, tolerance));
  checks.push_back(check_concat(opts, tolerance));
  checks.push_back(check_add(opts, tolerance));
  checks.push_back(check_scale(opts, tolerance));
  checks.push_back(check_softmax_ce(opts, tolerance));
  return checks;
}

ComponentCheck network_grad_check(const GradCheckOptions& opts, double tolerance) {
  const ArchConfig cfg = ArchConfig::miniature();
  BuiltNetwork net = build_res_squ_cnds(cfg);
  const LossTaps taps{net.input_id, net.main_loss, net.aux_loss, net.main_logits};

  ParamStore<double> params =
      init_params<double>(net.graph, InitSpec{}, net.output_convs, mix_seed(opts.seed, 0xF1));

  Rng rng(mix_seed(opts.seed, 0xF2));
  Tensor<double> batch(Shape{2, cfg.input_channels, cfg.input_h, cfg.input_w});
  for (auto& v : batch.values) v = rng.next_uniform(-1.0, 1.0);
  const std::vector<int> labels{0, 1};

  const AlphaSchedule sched{0.3, 10, AlphaMode::linear};
  const int t = 3;
  const uint64_t fwd_seed = mix_seed(opts.seed, 0xF3);

  // analytic gradients once
  NetworkLossResult<double> res =
      network_loss(net.graph, params, taps, batch, labels, sched, t, fwd_seed, RunMode::train);
  std::vector<double> analytic;
  for (const auto& [id, plist] : params.entries())
    for (const auto& p : plist)
      analytic.insert(analytic.end(), p.tensor.grad.begin(), p.tensor.grad.end());

  const double alpha = res.loss.alpha;
  auto total_loss = [&]() {
    ForwardResult<double> fwd =
        forward(net.graph, params, {{taps.input_id, batch}}, RunMode::train, fwd_seed);
    const double l0 = mean_cross_entropy(net.graph, fwd, taps.main_loss, labels);
    const double ls = mean_cross_entropy(net.graph, fwd, taps.aux_loss, labels);
    return l0 + alpha * ls;
  };

  double worst = 0.0;
  size_t offset = 0;
  for (auto& [id, plist] : params.entries()) {
    for (auto& p : plist) {
      std::span<double> values(p.tensor.values.data(), p.tensor.values.size());
      std::span<const double> grads(analytic.data() + offset, p.tensor.values.size());
      worst = std::max(worst, max_relative_error(total_loss, values, grads, opts.eps));
      offset += p.tensor.values.size();
    }
  }
  return {"miniature_network", worst, tolerance};
}

}  // namespace rsq
