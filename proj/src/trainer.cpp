#include "rsq/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "rsq/io_util.hpp"

namespace rsq {

namespace {

constexpr int64_t kCropSource = 256;
constexpr int64_t kCropTarget = 227;

template <std::floating_point T>
int beaten_by(std::span<const T> logits, int label) {
  const T ref = logits[static_cast<size_t>(label)];
  int beaten = 0;
  for (size_t j = 0; j < logits.size(); ++j) {
    const int jj = static_cast<int>(j);
    if (logits[j] > ref || (logits[j] == ref && jj < label)) ++beaten;
  }
  return beaten;
}

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (size_t i = n; i > 1; --i) {
    const size_t j = rng.next_below(static_cast<uint32_t>(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

enum class BatchMode { direct, crop227 };

/// Copies dataset samples into an NCHW batch, subtracting per-channel means.
template <std::floating_point T>
Tensor<T> assemble_batch(const Dataset& data, std::span<const size_t> indices,
                         std::span<const double> means, BatchMode mode, RunMode run_mode,
                         Rng& crop_rng) {
  const int64_t c = data.header.channels;
  const int64_t h = data.header.height;
  const int64_t w = data.header.width;
  const int64_t n = static_cast<int64_t>(indices.size());

  if (mode == BatchMode::crop227) {
    Tensor<T> out(Shape{n, c, kCropTarget, kCropTarget});
    for (int64_t i = 0; i < n; ++i) {
      Tensor<T> img(Shape{1, c, h, w});
      const auto s = data.sample(indices[static_cast<size_t>(i)]);
      for (size_t v = 0; v < s.size(); ++v) img.values[v] = static_cast<T>(s[v]);
      Tensor<T> cropped = preprocess_sample(img, means, run_mode, crop_rng);
      std::copy(cropped.values.begin(), cropped.values.end(),
                out.values.begin() + i * c * kCropTarget * kCropTarget);
    }
    return out;
  }

  Tensor<T> out(Shape{n, c, h, w});
  const int64_t plane = h * w;
  for (int64_t i = 0; i < n; ++i) {
    const auto s = data.sample(indices[static_cast<size_t>(i)]);
    T* dst = out.values.data() + i * c * plane;
    for (int64_t ch = 0; ch < c; ++ch) {
      const T mean = static_cast<T>(means[static_cast<size_t>(ch)]);
      const float* src = s.data() + ch * plane;
      for (int64_t j = 0; j < plane; ++j) dst[ch * plane + j] = static_cast<T>(src[j]) - mean;
    }
  }
  return out;
}

BatchMode pick_batch_mode(const Dataset& data, const Shape& input_shape) {
  if (static_cast<int64_t>(data.header.channels) != input_shape.c)
    throw ConfigError("dataset has " + std::to_string(data.header.channels) +
                      " channels, the network expects " + std::to_string(input_shape.c));
  if (static_cast<int64_t>(data.header.height) == input_shape.h &&
      static_cast<int64_t>(data.header.width) == input_shape.w)
    return BatchMode::direct;
  if (data.header.height == kCropSource && data.header.width == kCropSource &&
      input_shape.h == kCropTarget && input_shape.w == kCropTarget)
    return BatchMode::crop227;
  throw ConfigError("dataset samples are " + std::to_string(data.header.height) + "x" +
                    std::to_string(data.header.width) + " but the network expects " +
                    std::to_string(input_shape.h) + "x" + std::to_string(input_shape.w));
}

}  // namespace

template <std::floating_point T>
ParamStore<T> init_params(const Graph& g, const InitSpec& spec,
                          std::span<const std::string> output_convs, uint64_t seed) {
  ParamStore<T> store = ParamStore<T>::allocate(g);
  Rng rng(mix_seed(seed, 0x1717));
  for (auto& [id, plist] : store.entries()) {
    const NodeSpec& node = g.node(id);
    if (node.kind != NodeKind::conv) continue;  // scale layers keep gamma=1, beta=0
    const bool is_output =
        std::find(output_convs.begin(), output_convs.end(), id) != output_convs.end();
    for (auto& p : plist) {
      if (p.name != "weight") continue;  // biases stay zero
      if (is_output) {
        for (auto& v : p.tensor.values)
          v = static_cast<T>(rng.next_gaussian(0.0, spec.output_std));
      } else if (spec.body.kind == InitBody::Kind::xavier_uniform) {
        const Shape& ws = p.tensor.shape;  // (out, in, kh, kw)
        const double fan_in = static_cast<double>(ws.c * ws.h * ws.w);
        const double bound = std::sqrt(3.0 / fan_in);
        for (auto& v : p.tensor.values)
          v = static_cast<T>(rng.next_uniform(-bound, bound));
      } else {
        for (auto& v : p.tensor.values)
          v = static_cast<T>(rng.next_gaussian(0.0, spec.body.stddev));
      }
    }
  }
  return store;
}

void TrainConfig::validate() const {
  if (batch_train < 1 || batch_val < 1) throw ConfigError("batch sizes must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (base_lr < 0) throw ConfigError("base_lr must be >= 0");
  if (lr_gamma <= 0.0 || lr_gamma > 1.0) throw ConfigError("lr_gamma must lie in (0, 1]");
  if (lr_step < 1) throw ConfigError("lr_step must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
}

double lr_at(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw DomainError("epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(cfg.epochs) + ")");
  return cfg.base_lr * std::pow(cfg.lr_gamma, static_cast<double>(epoch / cfg.lr_step));
}

template <std::floating_point T>
Tensor<T> mirror_horizontal(const Tensor<T>& img) {
  Tensor<T> out(img.shape);
  for (int64_t n = 0; n < img.shape.n; ++n)
    for (int64_t c = 0; c < img.shape.c; ++c)
      for (int64_t y = 0; y < img.shape.h; ++y)
        for (int64_t x = 0; x < img.shape.w; ++x)
          out.values[out.index(n, c, y, x)] = img.values[img.index(n, c, y, img.shape.w - 1 - x)];
  return out;
}

template <std::floating_point T>
Tensor<T> preprocess_sample(const Tensor<T>& img, std::span<const double> channel_means,
                            RunMode mode, Rng& rng) {
  if (img.shape.h != kCropSource || img.shape.w != kCropSource)
    throw DimensionError("preprocess expects 256x256 input, got " + img.shape.str());
  if (static_cast<int64_t>(channel_means.size()) != img.shape.c)
    throw DimensionError("channel mean count != channels");

  const int64_t margin = kCropSource - kCropTarget;  // 29
  int64_t oy, ox;
  bool mirror = false;
  if (mode == RunMode::train) {
    oy = rng.next_below(static_cast<uint32_t>(margin + 1));
    ox = rng.next_below(static_cast<uint32_t>(margin + 1));
    mirror = rng.next_unit() < 0.5;
  } else {
    oy = ox = margin / 2;
  }

  Tensor<T> out(Shape{img.shape.n, img.shape.c, kCropTarget, kCropTarget});
  for (int64_t n = 0; n < img.shape.n; ++n)
    for (int64_t c = 0; c < img.shape.c; ++c) {
      const T mean = static_cast<T>(channel_means[static_cast<size_t>(c)]);
      for (int64_t y = 0; y < kCropTarget; ++y)
        for (int64_t x = 0; x < kCropTarget; ++x)
          out.values[out.index(n, c, y, x)] = img.values[img.index(n, c, oy + y, ox + x)] - mean;
    }
  return mirror ? mirror_horizontal(out) : out;
}

template <std::floating_point T>
void sgd_step(ParamStore<T>& params, double lr, double momentum, double weight_decay) {
  const T m = static_cast<T>(momentum);
  const T wd = static_cast<T>(weight_decay);
  const T rate = static_cast<T>(lr);
  for (auto& [id, plist] : params.entries()) {
    for (auto& p : plist) {
      if (p.tensor.grad.empty()) continue;
      if (p.velocity.size() != p.tensor.values.size())
        p.velocity.assign(p.tensor.values.size(), T(0));
      for (size_t i = 0; i < p.tensor.values.size(); ++i) {
        p.velocity[i] = m * p.velocity[i] + p.tensor.grad[i] + wd * p.tensor.values[i];
        p.tensor.values[i] -= rate * p.velocity[i];
      }
    }
  }
}

std::string metrics_csv_header() { return "epoch,step,lr,alpha,L0,Ls,total,top1,top5,wall_ms\n"; }

std::string metrics_csv_row(const MetricsRow& row) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%d,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.6f,%.6f,%lld\n", row.epoch,
                static_cast<long long>(row.step), row.lr, row.alpha, row.l0, row.ls, row.total,
                row.top1, row.top5, static_cast<long long>(row.wall_ms));
  return buf;
}

template <std::floating_point T>
TrainResult<T> train(const Graph& g, const LossTaps& taps,
                     std::span<const std::string> output_convs, const TrainConfig& cfg,
                     const Dataset& data, const TrainHooks<T>* hooks) {
  cfg.validate();
  const Shape in_shape = g.shape_of(taps.input_id);
  const BatchMode mode = pick_batch_mode(data, in_shape);
  const int64_t classes = g.shape_of(taps.main_loss).c;
  if (static_cast<int64_t>(data.header.class_count) != classes)
    throw ConfigError("dataset declares " + std::to_string(data.header.class_count) +
                      " classes, the network outputs " + std::to_string(classes));

  const std::vector<double> means = compute_channel_means(data);
  ParamStore<T> params = init_params<T>(g, cfg.init, output_convs, cfg.seed);
  if (hooks && hooks->on_init) hooks->on_init(params);

  AlphaSchedule sched = cfg.alpha;
  TrainResult<T> result{.metrics = {}, .params = {}};
  int64_t gstep = 0;
  bool stopped = false;

  for (int epoch = 0; epoch < cfg.epochs && !stopped; ++epoch) {
    const double lr = lr_at(cfg, epoch);
    const double alpha_t = static_cast<double>(std::min(epoch, sched.total));
    (void)alpha_t;
    const std::vector<size_t> order =
        shuffled_indices(data.labels.size(), mix_seed(cfg.seed, 0x50 + static_cast<uint64_t>(epoch)));
    Rng crop_rng(mix_seed(cfg.seed, 0xC0 + static_cast<uint64_t>(epoch)));

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_train)) {
      if (cfg.max_steps > 0 && gstep >= cfg.max_steps) {
        stopped = true;
        break;
      }
      const auto t0 = std::chrono::steady_clock::now();
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_train));
      std::span<const size_t> indices(order.data() + start, end - start);
      Tensor<T> batch = assemble_batch<T>(data, indices, means, mode, RunMode::train, crop_rng);
      std::vector<int> labels(indices.size());
      for (size_t i = 0; i < indices.size(); ++i) labels[i] = data.labels[indices[i]];

      const int t = std::min(epoch, sched.total);
      NetworkLossResult<T> res = network_loss(g, params, taps, batch, labels, sched, t,
                                              mix_seed(cfg.seed, 0xD000 + static_cast<uint64_t>(gstep)),
                                              RunMode::train);
      sgd_step(params, lr, cfg.momentum, cfg.weight_decay);

      const Tensor<T>& logits = res.fwd.act(g, taps.main_logits);
      int hits1 = 0, hits5 = 0;
      for (int64_t i = 0; i < logits.shape.n; ++i) {
        std::span<const T> row(logits.values.data() + i * classes, static_cast<size_t>(classes));
        const int beaten = beaten_by(row, labels[static_cast<size_t>(i)]);
        if (beaten < 1) ++hits1;
        if (beaten < 5) ++hits5;
      }
      const auto t1 = std::chrono::steady_clock::now();

      MetricsRow row;
      row.epoch = epoch;
      row.step = ++gstep;
      row.lr = lr;
      row.alpha = res.loss.alpha;
      row.l0 = res.loss.main_loss;
      row.ls = res.loss.branch_loss;
      row.total = res.loss.total;
      row.top1 = static_cast<double>(hits1) / static_cast<double>(indices.size());
      row.top5 = static_cast<double>(hits5) / static_cast<double>(indices.size());
      row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
      result.metrics.push_back(row);
    }
    if (hooks && hooks->on_epoch_end) hooks->on_epoch_end(epoch, params);
  }
  result.params = std::move(params);
  return result;
}

template <std::floating_point T>
std::pair<double, double> evaluate(const Graph& g, const ParamStore<T>& params,
                                   const LossTaps& taps, const Dataset& data, int batch) {
  if (data.labels.empty()) throw DomainError("cannot evaluate on an empty dataset");
  if (batch < 1) throw DomainError("evaluation batch must be >= 1");
  const Shape in_shape = g.shape_of(taps.input_id);
  const BatchMode mode = pick_batch_mode(data, in_shape);
  const int64_t classes = g.shape_of(taps.main_loss).c;
  const std::vector<double> means = compute_channel_means(data);

  Rng rng(0);  // infer path draws nothing
  int hits1 = 0, hits5 = 0;
  for (size_t start = 0; start < data.labels.size(); start += static_cast<size_t>(batch)) {
    const size_t end = std::min(data.labels.size(), start + static_cast<size_t>(batch));
    std::vector<size_t> indices(end - start);
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = start + i;
    Tensor<T> bt = assemble_batch<T>(data, indices, means, mode, RunMode::infer, rng);
    ForwardResult<T> fwd = forward(g, params, {{taps.input_id, bt}}, RunMode::infer, 0);
    const Tensor<T>& logits = fwd.act(g, taps.main_logits);
    for (int64_t i = 0; i < logits.shape.n; ++i) {
      std::span<const T> row(logits.values.data() + i * classes, static_cast<size_t>(classes));
      const int beaten = beaten_by(row, static_cast<int>(data.labels[indices[static_cast<size_t>(i)]]));
      if (beaten < 1) ++hits1;
      if (beaten < 5) ++hits5;
    }
  }
  const double n = static_cast<double>(data.labels.size());
  return {hits1 / n, hits5 / n};
}

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& json_path,
                     const std::filesystem::path& bin_path, const Graph& g,
                     const ParamStore<T>& params) {
  std::string blob;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [id, plist] : params.entries()) {
    for (const auto& p : plist) {
      const Shape& s = p.tensor.shape;
      table.push_back({{"node", id},
                       {"param", p.name},
                       {"shape", {s.n, s.c, s.h, s.w}},
                       {"offset", blob.size()},
                       {"bytes", p.tensor.size() * 4}});
      for (T v : p.tensor.values) append_f32_le(blob, static_cast<float>(v));
    }
  }
  nlohmann::json j{{"format", "rsq-checkpoint"},
                   {"version", 1},
                   {"blob", bin_path.filename().string()},
                   {"graph", g.to_json()},
                   {"params", std::move(table)}};
  write_file_atomic(bin_path, blob);
  write_file_atomic(json_path, j.dump(2) + "\n");
}

template <std::floating_point T>
ParamStore<T> load_checkpoint(const std::filesystem::path& json_path, Graph* graph_out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(json_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("cannot parse checkpoint " + json_path.string() + ": " + e.what());
  }
  if (!j.contains("format") || j.at("format") != "rsq-checkpoint")
    throw FormatError(json_path.string() + " is not a checkpoint manifest");
  Graph g = Graph::from_json(j.at("graph"));
  const std::filesystem::path bin_path = json_path.parent_path() / j.at("blob").get<std::string>();
  const std::string blob = read_file(bin_path);

  ParamStore<T> store = ParamStore<T>::allocate(g);
  for (const auto& entry : j.at("params")) {
    const std::string node = entry.at("node").get<std::string>();
    const std::string name = entry.at("param").get<std::string>();
    const size_t offset = entry.at("offset").get<size_t>();
    const size_t bytes = entry.at("bytes").get<size_t>();
    Param<T>* p = store.find(node, name);
    if (!p) throw FormatError("checkpoint names unknown parameter '" + node + "." + name + "'");
    if (bytes != p->tensor.size() * 4)
      throw FormatError("checkpoint size mismatch for '" + node + "." + name + "'");
    if (offset + bytes > blob.size())
      throw TruncationError("checkpoint blob ends before '" + node + "." + name + "'");
    const auto* src = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
    for (size_t i = 0; i < p->tensor.size(); ++i)
      p->tensor.values[i] = static_cast<T>(read_f32_le(src + 4 * i));
  }
  if (graph_out) *graph_out = std::move(g);
  return store;
}

#define RSQ_INSTANTIATE_TRAINER(T)                                                               \
  template ParamStore<T> init_params<T>(const Graph&, const InitSpec&,                           \
                                        std::span<const std::string>, uint64_t);                 \
  template Tensor<T> mirror_horizontal<T>(const Tensor<T>&);                                     \
  template Tensor<T> preprocess_sample<T>(const Tensor<T>&, std::span<const double>, RunMode,    \
                                          Rng&);                                                 \
  template void sgd_step<T>(ParamStore<T>&, double, double, double);                             \
  template TrainResult<T> train<T>(const Graph&, const LossTaps&, std::span<const std::string>,  \
                                   const TrainConfig&, const Dataset&, const TrainHooks<T>*);    \
  template std::pair<double, double> evaluate<T>(const Graph&, const ParamStore<T>&,             \
                                                 const LossTaps&, const Dataset&, int);          \
  template void save_checkpoint<T>(const std::filesystem::path&, const std::filesystem::path&,   \
                                   const Graph&, const ParamStore<T>&);                          \
  template ParamStore<T> load_checkpoint<T>(const std::filesystem::path&, Graph*);

RSQ_INSTANTIATE_TRAINER(float)
RSQ_INSTANTIATE_TRAINER(double)

#undef RSQ_INSTANTIATE_TRAINER

}  // namespace rsq
