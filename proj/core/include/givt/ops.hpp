#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "givt/tensor.hpp"

namespace givt {

// Broadcasting is limited to two cases: `b` has the trailing extents of `a`
// (bias / positional rows) or `b` holds a single element.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);

/// GELU, tanh approximation.
template <typename T> Tensor<T> gelu(const Tensor<T>& a);
template <typename T> Tensor<T> softplus(const Tensor<T>& a);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
/// Requires strictly positive input.
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

/// `a` is [..., k] (leading extents act as rows), `b` is [k, n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Numerically stable softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes the last axis to zero mean / unit variance and applies `gain`; no bias.
template <typename T> Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);

/// Row lookup: table [rows, width] -> [indices.size(), width].
template <typename T> Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> indices);

/// Multi-head self-attention over [batch, seq, width] projections.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads, bool causal);

/// NHWC convolution; `weight` is [kh, kw, in, out], `bias` is [out] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad);

/// Nearest-neighbour 2x spatial upsampling of an NHWC tensor.
template <typename T> Tensor<T> upsample2x(const Tensor<T>& x);

/// Mean negative log-likelihood of `target` under per-channel k-mixture GMMs.
///
/// `head` is [..., 3*d*k]; each row holds d*k means, d*k raw scales and d*k
/// mixture logits (channel-major, component-minor). Scales are
/// softplus(raw) + sigma_floor, weights are softmax(logits) per channel.
/// `target` holds rows*d values. `row_weights` (empty = all ones) selects which
/// rows enter the average; the result is
///   sum_r w_r * mean_c nll(r, c) / sum_r w_r.
template <typename T>
Tensor<T> gmm_nll(const Tensor<T>& head, std::span<const T> target, std::span<const T> row_weights,
                  std::size_t d, std::size_t k, T sigma_floor);

} // namespace givt
