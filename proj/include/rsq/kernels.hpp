#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rsq/common.hpp"
#include "rsq/tensor.hpp"

namespace rsq {

enum class PoolKind { max, avg };

// Forward kernels return fresh tensors. Backward kernels accumulate (+=) into
// the caller's zero-initialized or partially filled gradient buffers, passed
// as flat spans in the operand's own layout; an empty span skips that operand.

/// x: (n, in_ch, h, w); weight: (out_ch, in_ch, kh, kw); bias: out_ch values.
template <std::floating_point T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias,
                         int stride, int pad);

template <std::floating_point T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, int stride, int pad,
                     const Tensor<T>& out_grad, std::span<T> x_grad, std::span<T> weight_grad,
                     std::span<T> bias_grad);

template <std::floating_point T>
Tensor<T> pool2d_forward(const Tensor<T>& x, PoolKind kind, int kernel, int stride, int pad);

/// Max pooling routes gradient to the first-found argmax of each window; avg
/// pooling spreads it uniformly over the kernel area.
template <std::floating_point T>
void pool2d_backward(const Tensor<T>& x, PoolKind kind, int kernel, int stride, int pad,
                     const Tensor<T>& out_grad, std::span<T> x_grad);

template <std::floating_point T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x);

template <std::floating_point T>
void global_avg_pool_backward(const Shape& x_shape, const Tensor<T>& out_grad, std::span<T> x_grad);

template <std::floating_point T>
Tensor<T> relu_forward(const Tensor<T>& x);

template <std::floating_point T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& out_grad, std::span<T> x_grad);

/// Inverted dropout: train mode zeroes each element with probability `rate`
/// and scales survivors by 1/(1-rate); infer mode is the identity. The kept
/// mask is written to *mask_out (train mode only) for the backward pass.
template <std::floating_point T>
Tensor<T> dropout_forward(const Tensor<T>& x, double rate, RunMode mode, uint64_t seed,
                          std::vector<uint8_t>* mask_out);

/// An empty mask means the forward ran in infer mode (identity pass-through).
template <std::floating_point T>
void dropout_backward(double rate, const std::vector<uint8_t>& mask, const Tensor<T>& out_grad,
                      std::span<T> x_grad);

/// Stacks b's channels after a's; n, h, w must agree (b.c == 0 degenerates to a copy of a).
template <std::floating_point T>
Tensor<T> concat_channels_forward(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
void concat_channels_backward(const Shape& a_shape, const Shape& b_shape, const Tensor<T>& out_grad,
                              std::span<T> a_grad, std::span<T> b_grad);

template <std::floating_point T>
Tensor<T> add_elementwise_forward(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
void add_elementwise_backward(const Tensor<T>& out_grad, std::span<T> a_grad, std::span<T> b_grad);

/// Per-channel affine: v * gamma[c] + beta[c].
template <std::floating_point T>
Tensor<T> scale_channels_forward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta);

template <std::floating_point T>
void scale_channels_backward(const Tensor<T>& x, std::span<const T> gamma, const Tensor<T>& out_grad,
                             std::span<T> x_grad, std::span<T> gamma_grad, std::span<T> beta_grad);

/// Numerically stable softmax (max subtraction).
template <std::floating_point T>
void softmax(std::span<const T> logits, std::span<T> probs);

/// -ln(p[label]) with the probability clamped at 1e-12.
template <std::floating_point T>
T cross_entropy(std::span<const T> probs, int label);

/// Accumulates weight * (p - onehot(label)) into logit_grad: the gradient of
/// cross-entropy fused through softmax.
template <std::floating_point T>
void softmax_ce_grad(std::span<const T> probs, int label, T weight, std::span<T> logit_grad);

}  // namespace rsq
