#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ddseg/tensor.hpp"

// Differentiable kernels. Each op records itself on the thread's active tape
// when any input requires a gradient. Feature maps are [C, H, W] (no batch
// axis); token matrices are [N, C].
namespace ddseg {

// Elementwise with numpy-style broadcasting (shapes are right-aligned; each
// axis must match or be 1).
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T> BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
template <typename T> BasicTensor<T> add_scalar(const BasicTensor<T>& a, T value);

template <typename T> BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> tanh(const BasicTensor<T>& x);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T> BasicTensor<T> gelu(const BasicTensor<T>& x);

template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);

// [.., m, k] x [.., k, n]. b may be rank 2 (shared across a's batch axes) or
// carry the same batch axes as a.
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
// Swaps the last two axes.
template <typename T> BasicTensor<T> transpose(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
template <typename T> BasicTensor<T> narrow(const BasicTensor<T>& x, int axis, std::int64_t start, std::int64_t length);
template <typename T> BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis);

template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x, int axis);
// Normalizes along `axis`, then applies gain/bias (both shaped [extent of axis]).
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias, int axis,
                          T epsilon = T(1e-5));

// Cross-correlation. x: [C, H, W], kernel: [C', C, kh, kw], bias: [C'] or undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias, int stride,
                      int pad);
// Per-channel cross-correlation. kernel: [C, 1, kh, kw].
template <typename T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                                int stride, int pad);

// Samples feat [C, H, W] at points [N, 2] given as (y, x) in [-1, 1] with
// pixel centers at (2i + 1) / extent - 1. Out-of-range points clamp to the
// border. Returns [N, C]; differentiable in both feat and points.
template <typename T> BasicTensor<T> bilinear_sample(const BasicTensor<T>& feat, const BasicTensor<T>& points);

template <typename T> BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, int factor);
// Half-pixel-center bilinear resize of [C, H, W].
template <typename T> BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w);
template <typename T> BasicTensor<T> avg_pool(const BasicTensor<T>& x, int factor);
// [C, H, W] -> [C, 1, 1]
template <typename T> BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

// Row lookup: table [K, D], ids -> [ids.size(), D].
template <typename T> BasicTensor<T> gather_rows(const BasicTensor<T>& table, std::span<const int> ids);

// Mean negative log-softmax over positions whose target != ignore_id.
// logits: [K, N]. With every position ignored the loss is 0 with zero gradient.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> targets, int ignore_id);

// Throws NumericError when x holds NaN/Inf. Kernels call this in debug builds.
template <typename T> void check_finite(const BasicTensor<T>& x, const char* where);

}  // namespace ddseg
