#include "rsq/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rsq/rng.hpp"

namespace rsq {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace

template <std::floating_point T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias,
                         int stride, int pad) {
  const Shape& xs = x.shape;
  const Shape& ws = weight.shape;  // (out, in, kh, kw)
  if (ws.c != xs.c)
    throw DimensionError("conv2d: input has " + std::to_string(xs.c) + " channels, filters expect " +
                         std::to_string(ws.c));
  require(static_cast<int64_t>(bias.size()) == ws.n, "conv2d: bias length != out_channels");
  const int64_t oh = conv_out_extent(xs.h, static_cast<int>(ws.h), stride, pad);
  const int64_t ow = conv_out_extent(xs.w, static_cast<int>(ws.w), stride, pad);

  Tensor<T> out(Shape{xs.n, ws.n, oh, ow});
  const int64_t in_c = xs.c, ih = xs.h, iw = xs.w, kh = ws.h, kw = ws.w, out_c = ws.n;
  const T* xv = x.values.data();
  const T* wv = weight.values.data();
  T* ov = out.values.data();

  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t oc = 0; oc < out_c; ++oc) {
      const T b = bias[static_cast<size_t>(oc)];
      for (int64_t r = 0; r < oh; ++r) {
        const int64_t ih0 = r * stride - pad;
        const int64_t kr_lo = std::max<int64_t>(0, -ih0);
        const int64_t kr_hi = std::min<int64_t>(kh, ih - ih0);
        for (int64_t s = 0; s < ow; ++s) {
          const int64_t iw0 = s * stride - pad;
          const int64_t kc_lo = std::max<int64_t>(0, -iw0);
          const int64_t kc_hi = std::min<int64_t>(kw, iw - iw0);
          T acc = b;
          for (int64_t c = 0; c < in_c; ++c) {
            const T* xplane = xv + (n * in_c + c) * ih * iw;
            const T* wplane = wv + (oc * in_c + c) * kh * kw;
            for (int64_t kr = kr_lo; kr < kr_hi; ++kr) {
              const T* xrow = xplane + (ih0 + kr) * iw + iw0;
              const T* wrow = wplane + kr * kw;
              for (int64_t kc = kc_lo; kc < kc_hi; ++kc) acc += xrow[kc] * wrow[kc];
            }
          }
          ov[((n * out_c + oc) * oh + r) * ow + s] = acc;
        }
      }
    }
  }
  return out;
}

template <std::floating_point T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, int stride, int pad,
                     const Tensor<T>& out_grad, std::span<T> x_grad, std::span<T> weight_grad,
                     std::span<T> bias_grad) {
  const Shape& xs = x.shape;
  const Shape& ws = weight.shape;
  const Shape& os = out_grad.shape;
  const int64_t in_c = xs.c, ih = xs.h, iw = xs.w, kh = ws.h, kw = ws.w, out_c = ws.n;
  const T* xv = x.values.data();
  const T* wv = weight.values.data();
  const T* gv = out_grad.values.data();
  T* xg = x_grad.empty() ? nullptr : x_grad.data();
  T* wg = weight_grad.empty() ? nullptr : weight_grad.data();
  T* bg = bias_grad.empty() ? nullptr : bias_grad.data();

  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t oc = 0; oc < out_c; ++oc) {
      for (int64_t r = 0; r < os.h; ++r) {
        const int64_t ih0 = r * stride - pad;
        const int64_t kr_lo = std::max<int64_t>(0, -ih0);
        const int64_t kr_hi = std::min<int64_t>(kh, ih - ih0);
        for (int64_t s = 0; s < os.w; ++s) {
          const int64_t iw0 = s * stride - pad;
          const int64_t kc_lo = std::max<int64_t>(0, -iw0);
          const int64_t kc_hi = std::min<int64_t>(kw, iw - iw0);
          const T g = gv[((n * out_c + oc) * os.h + r) * os.w + s];
          if (bg) bg[oc] += g;
          if (!xg && !wg) continue;
          for (int64_t c = 0; c < in_c; ++c) {
            const int64_t xbase = (n * in_c + c) * ih * iw;
            const int64_t wbase = (oc * in_c + c) * kh * kw;
            for (int64_t kr = kr_lo; kr < kr_hi; ++kr) {
              const int64_t xrow = xbase + (ih0 + kr) * iw + iw0;
              const int64_t wrow = wbase + kr * kw;
              for (int64_t kc = kc_lo; kc < kc_hi; ++kc) {
                if (xg) xg[xrow + kc] += g * wv[wrow + kc];
                if (wg) wg[wrow + kc] += g * xv[xrow + kc];
              }
            }
          }
        }
      }
    }
  }
}

template <std::floating_point T>
Tensor<T> pool2d_forward(const Tensor<T>& x, PoolKind kind, int kernel, int stride, int pad) {
  const Shape& xs = x.shape;
  const int64_t oh = conv_out_extent(xs.h, kernel, stride, pad);
  const int64_t ow = conv_out_extent(xs.w, kernel, stride, pad);
  Tensor<T> out(Shape{xs.n, xs.c, oh, ow});
  const T* xv = x.values.data();
  T* ov = out.values.data();
  const T denom = static_cast<T>(kernel) * static_cast<T>(kernel);

  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < xs.c; ++c) {
      const T* plane = xv + (n * xs.c + c) * xs.h * xs.w;
      for (int64_t r = 0; r < oh; ++r) {
        const int64_t h0 = r * stride - pad;
        const int64_t h_lo = std::max<int64_t>(0, h0);
        const int64_t h_hi = std::min<int64_t>(xs.h, h0 + kernel);
        for (int64_t s = 0; s < ow; ++s) {
          const int64_t w0 = s * stride - pad;
          const int64_t w_lo = std::max<int64_t>(0, w0);
          const int64_t w_hi = std::min<int64_t>(xs.w, w0 + kernel);
          T result;
          if (kind == PoolKind::max) {
            T best = std::numeric_limits<T>::lowest();
            bool any = false;
            for (int64_t hh = h_lo; hh < h_hi; ++hh)
              for (int64_t ww = w_lo; ww < w_hi; ++ww) {
                const T v = plane[hh * xs.w + ww];
                if (!any || v > best) {
                  best = v;
                  any = true;
                }
              }
            result = any ? best : T(0);
          } else {
            T sum = T(0);
            for (int64_t hh = h_lo; hh < h_hi; ++hh)
              for (int64_t ww = w_lo; ww < w_hi; ++ww) sum += plane[hh * xs.w + ww];
            result = sum / denom;
          }
          ov[((n * xs.c + c) * oh + r) * ow + s] = result;
        }
      }
    }
  }
  return out;
}

template <std::floating_point T>
void pool2d_backward(const Tensor<T>& x, PoolKind kind, int kernel, int stride, int pad,
                     const Tensor<T>& out_grad, std::span<T> x_grad) {
  const Shape& xs = x.shape;
  const Shape& os = out_grad.shape;
  const T* xv = x.values.data();
  const T* gv = out_grad.values.data();
  T* xg = x_grad.data();
  const T denom = static_cast<T>(kernel) * static_cast<T>(kernel);

  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < xs.c; ++c) {
      const int64_t base = (n * xs.c + c) * xs.h * xs.w;
      for (int64_t r = 0; r < os.h; ++r) {
        const int64_t h0 = r * stride - pad;
        const int64_t h_lo = std::max<int64_t>(0, h0);
        const int64_t h_hi = std::min<int64_t>(xs.h, h0 + kernel);
        for (int64_t s = 0; s < os.w; ++s) {
          const int64_t w0 = s * stride - pad;
          const int64_t w_lo = std::max<int64_t>(0, w0);
          const int64_t w_hi = std::min<int64_t>(xs.w, w0 + kernel);
          const T g = gv[((n * xs.c + c) * os.h + r) * os.w + s];
          if (kind == PoolKind::max) {
            // first-found tie break, same scan order as the forward pass
            int64_t best_pos = -1;
            T best = std::numeric_limits<T>::lowest();
            bool any = false;
            for (int64_t hh = h_lo; hh < h_hi; ++hh)
              for (int64_t ww = w_lo; ww < w_hi; ++ww) {
                const T v = xv[base + hh * xs.w + ww];
                if (!any || v > best) {
                  best = v;
                  best_pos = base + hh * xs.w + ww;
                  any = true;
                }
              }
            if (best_pos >= 0) xg[best_pos] += g;
          } else {
            const T share = g / denom;
            for (int64_t hh = h_lo; hh < h_hi; ++hh)
              for (int64_t ww = w_lo; ww < w_hi; ++ww) xg[base + hh * xs.w + ww] += share;
          }
        }
      }
    }
  }
}

template <std::floating_point T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  const Shape& xs = x.shape;
  Tensor<T> out(Shape{xs.n, xs.c, 1, 1});
  const int64_t plane = xs.h * xs.w;
  const T* xv = x.values.data();
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < xs.c; ++c) {
      const T* p = xv + (n * xs.c + c) * plane;
      T sum = T(0);
      for (int64_t i = 0; i < plane; ++i) sum += p[i];
      out.values[static_cast<size_t>(n * xs.c + c)] = sum / static_cast<T>(plane);
    }
  }
  return out;
}

template <std::floating_point T>
void global_avg_pool_backward(const Shape& x_shape, const Tensor<T>& out_grad, std::span<T> x_grad) {
  const int64_t plane = x_shape.h * x_shape.w;
  T* xg = x_grad.data();
  for (int64_t n = 0; n < x_shape.n; ++n) {
    for (int64_t c = 0; c < x_shape.c; ++c) {
      const T share = out_grad.values[static_cast<size_t>(n * x_shape.c + c)] / static_cast<T>(plane);
      T* p = xg + (n * x_shape.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] += share;
    }
  }
}

template <std::floating_point T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out(x.shape);
  for (size_t i = 0; i < x.values.size(); ++i) out.values[i] = x.values[i] > T(0) ? x.values[i] : T(0);
  return out;
}

template <std::floating_point T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& out_grad, std::span<T> x_grad) {
  for (size_t i = 0; i < x.values.size(); ++i)
    if (x.values[i] > T(0)) x_grad[i] += out_grad.values[i];
}

template <std::floating_point T>
Tensor<T> dropout_forward(const Tensor<T>& x, double rate, RunMode mode, uint64_t seed,
                          std::vector<uint8_t>* mask_out) {
  if (rate < 0.0 || rate >= 1.0)
    throw DomainError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (mode == RunMode::infer) {
    if (mask_out) mask_out->clear();
    return x;
  }
  Tensor<T> out(x.shape);
  if (mask_out) mask_out->assign(x.values.size(), 0);
  Rng rng(seed);
  const T inv = static_cast<T>(1.0 / (1.0 - rate));
  for (size_t i = 0; i < x.values.size(); ++i) {
    const bool keep = rng.next_unit() >= rate;
    out.values[i] = keep ? x.values[i] * inv : T(0);
    if (mask_out) (*mask_out)[i] = keep ? 1 : 0;
  }
  return out;
}

template <std::floating_point T>
void dropout_backward(double rate, const std::vector<uint8_t>& mask, const Tensor<T>& out_grad,
                      std::span<T> x_grad) {
  if (mask.empty()) {  // infer-mode pass-through
    for (size_t i = 0; i < out_grad.values.size(); ++i) x_grad[i] += out_grad.values[i];
    return;
  }
  const T inv = static_cast<T>(1.0 / (1.0 - rate));
  for (size_t i = 0; i < out_grad.values.size(); ++i)
    if (mask[i]) x_grad[i] += out_grad.values[i] * inv;
}

template <std::floating_point T>
Tensor<T> concat_channels_forward(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w)
    throw DimensionError("concat_channels: spatial/batch mismatch " + a.shape.str() + " vs " +
                         b.shape.str());
  Tensor<T> out(Shape{a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w});
  const int64_t plane = a.shape.h * a.shape.w;
  for (int64_t n = 0; n < a.shape.n; ++n) {
    T* dst = out.values.data() + n * out.shape.c * plane;
    const T* pa = a.values.data() + n * a.shape.c * plane;
    const T* pb = b.values.data() + n * b.shape.c * plane;
    std::copy(pa, pa + a.shape.c * plane, dst);
    std::copy(pb, pb + b.shape.c * plane, dst + a.shape.c * plane);
  }
  return out;
}

template <std::floating_point T>
void concat_channels_backward(const Shape& a_shape, const Shape& b_shape, const Tensor<T>& out_grad,
                              std::span<T> a_grad, std::span<T> b_grad) {
  const int64_t plane = a_shape.h * a_shape.w;
  const int64_t out_c = a_shape.c + b_shape.c;
  for (int64_t n = 0; n < a_shape.n; ++n) {
    const T* g = out_grad.values.data() + n * out_c * plane;
    T* ga = a_grad.data() + n * a_shape.c * plane;
    T* gb = b_grad.data() + n * b_shape.c * plane;
    for (int64_t i = 0; i < a_shape.c * plane; ++i) ga[i] += g[i];
    for (int64_t i = 0; i < b_shape.c * plane; ++i) gb[i] += g[a_shape.c * plane + i];
  }
}

template <std::floating_point T>
Tensor<T> add_elementwise_forward(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape == b.shape))
    throw DimensionError("add_elementwise: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  Tensor<T> out(a.shape);
  for (size_t i = 0; i < a.values.size(); ++i) out.values[i] = a.values[i] + b.values[i];
  return out;
}

template <std::floating_point T>
void add_elementwise_backward(const Tensor<T>& out_grad, std::span<T> a_grad, std::span<T> b_grad) {
  for (size_t i = 0; i < out_grad.values.size(); ++i) {
    a_grad[i] += out_grad.values[i];
    b_grad[i] += out_grad.values[i];
  }
}

template <std::floating_point T>
Tensor<T> scale_channels_forward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta) {
  if (static_cast<int64_t>(gamma.size()) != x.shape.c ||
      static_cast<int64_t>(beta.size()) != x.shape.c)
    throw DimensionError("scale_channels: gamma/beta length != channel count");
  Tensor<T> out(x.shape);
  const int64_t plane = x.shape.h * x.shape.w;
  for (int64_t n = 0; n < x.shape.n; ++n)
    for (int64_t c = 0; c < x.shape.c; ++c) {
      const T g = gamma[static_cast<size_t>(c)];
      const T b = beta[static_cast<size_t>(c)];
      const T* src = x.values.data() + (n * x.shape.c + c) * plane;
      T* dst = out.values.data() + (n * x.shape.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * g + b;
    }
  return out;
}

template <std::floating_point T>
void scale_channels_backward(const Tensor<T>& x, std::span<const T> gamma, const Tensor<T>& out_grad,
                             std::span<T> x_grad, std::span<T> gamma_grad, std::span<T> beta_grad) {
  const int64_t plane = x.shape.h * x.shape.w;
  for (int64_t n = 0; n < x.shape.n; ++n)
    for (int64_t c = 0; c < x.shape.c; ++c) {
      const T* g = out_grad.values.data() + (n * x.shape.c + c) * plane;
      const T* src = x.values.data() + (n * x.shape.c + c) * plane;
      T dgamma = T(0), dbeta = T(0);
      if (!x_grad.empty()) {
        T* xg = x_grad.data() + (n * x.shape.c + c) * plane;
        const T gam = gamma[static_cast<size_t>(c)];
        for (int64_t i = 0; i < plane; ++i) {
          xg[i] += g[i] * gam;
          dgamma += g[i] * src[i];
          dbeta += g[i];
        }
      } else {
        for (int64_t i = 0; i < plane; ++i) {
          dgamma += g[i] * src[i];
          dbeta += g[i];
        }
      }
      if (!gamma_grad.empty()) gamma_grad[static_cast<size_t>(c)] += dgamma;
      if (!beta_grad.empty()) beta_grad[static_cast<size_t>(c)] += dbeta;
    }
}

template <std::floating_point T>
void softmax(std::span<const T> logits, std::span<T> probs) {
  if (logits.empty()) throw DomainError("softmax: empty logit vector");
  if (logits.size() != probs.size()) throw DimensionError("softmax: output size mismatch");
  T m = logits[0];
  for (T v : logits) m = std::max(m, v);
  T sum = T(0);
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - m);
    sum += probs[i];
  }
  for (size_t i = 0; i < probs.size(); ++i) probs[i] /= sum;
}

template <std::floating_point T>
T cross_entropy(std::span<const T> probs, int label) {
  if (label < 0 || static_cast<size_t>(label) >= probs.size())
    throw IndexError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                     std::to_string(probs.size()) + ")");
  const T p = std::max(probs[static_cast<size_t>(label)], static_cast<T>(1e-12));
  return -std::log(p);
}

template <std::floating_point T>
void softmax_ce_grad(std::span<const T> probs, int label, T weight, std::span<T> logit_grad) {
  if (label < 0 || static_cast<size_t>(label) >= probs.size())
    throw IndexError("softmax_ce_grad: label out of range");
  for (size_t i = 0; i < probs.size(); ++i) {
    const T y = (static_cast<size_t>(label) == i) ? T(1) : T(0);
    logit_grad[i] += weight * (probs[i] - y);
  }
}

#define RSQ_INSTANTIATE_KERNELS(T)                                                                  \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, int, \
                                       int);                                                        \
  template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, int, int, const Tensor<T>&,  \
                                   std::span<T>, std::span<T>, std::span<T>);                       \
  template Tensor<T> pool2d_forward<T>(const Tensor<T>&, PoolKind, int, int, int);                  \
  template void pool2d_backward<T>(const Tensor<T>&, PoolKind, int, int, int, const Tensor<T>&,     \
                                   std::span<T>);                                                   \
  template Tensor<T> global_avg_pool_forward<T>(const Tensor<T>&);                                  \
  template void global_avg_pool_backward<T>(const Shape&, const Tensor<T>&, std::span<T>);          \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                             \
  template void relu_backward<T>(const Tensor<T>&, const Tensor<T>&, std::span<T>);                 \
  template Tensor<T> dropout_forward<T>(const Tensor<T>&, double, RunMode, uint64_t,                \
                                        std::vector<uint8_t>*);                                     \
  template void dropout_backward<T>(double, const std::vector<uint8_t>&, const Tensor<T>&,          \
                                    std::span<T>);                                                  \
  template Tensor<T> concat_channels_forward<T>(const Tensor<T>&, const Tensor<T>&);                \
  template void concat_channels_backward<T>(const Shape&, const Shape&, const Tensor<T>&,           \
                                            std::span<T>, std::span<T>);                            \
  template Tensor<T> add_elementwise_forward<T>(const Tensor<T>&, const Tensor<T>&);                \
  template void add_elementwise_backward<T>(const Tensor<T>&, std::span<T>, std::span<T>);          \
  template Tensor<T> scale_channels_forward<T>(const Tensor<T>&, std::span<const T>,                \
                                               std::span<const T>);                                 \
  template void scale_channels_backward<T>(const Tensor<T>&, std::span<const T>, const Tensor<T>&,  \
                                           std::span<T>, std::span<T>, std::span<T>);               \
  template void softmax<T>(std::span<const T>, std::span<T>);                                       \
  template T cross_entropy<T>(std::span<const T>, int);                                             \
  template void softmax_ce_grad<T>(std::span<const T>, int, T, std::span<T>);

RSQ_INSTANTIATE_KERNELS(float)
RSQ_INSTANTIATE_KERNELS(double)

#undef RSQ_INSTANTIATE_KERNELS

}  // namespace rsq
