#pragma once

#include <cstddef>
#include <functional>
#include <span>

// Raw numeric kernels shared by the autodiff ops and the cached inference path.
// Every output element is reduced in a fixed order that does not depend on the
// number of rows processed or on the thread count, so a row computed alone is
// bit-identical to the same row computed inside a larger batch.

namespace givt::kernels {

/// Number of worker threads kernels may use (GIVT_THREADS caps it).
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Splits [0, n) into contiguous chunks across up to thread_count() threads
/// when `work` is large enough to pay for it.
void parallel_for(std::size_t n, std::size_t work, const std::function<void(std::size_t, std::size_t)>& body);

/// c[m x n] (+)= a[m x k] * b[k x n]
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// c[k x n] (+)= a[m x k]^T * g[m x n]
template <typename T>
void gemm_tn(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// c[m x k] (+)= g[m x n] * b[k x n]^T
template <typename T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

inline constexpr double layernorm_eps = 1e-6;

/// Bias-free layer normalization of one row; writes mean and 1/sqrt(var + eps).
template <typename T>
void layernorm_row(const T* x, const T* gain, T* out, std::size_t n, T& mean, T& rstd);

template <typename T>
T gelu(T x);
template <typename T>
T gelu_grad(T x);
template <typename T>
T softplus(T x);
template <typename T>
T sigmoid(T x);

/// Multi-head scaled dot-product attention for a single query row against
/// `n_keys` cached key/value rows (each of width `width`, split into `heads`).
/// `probs` (heads x n_keys) receives the attention weights when non-null.
template <typename T>
void attention_row(const T* q, const T* keys, const T* values, std::size_t n_keys, std::size_t width,
                   std::size_t heads, T* out, T* probs);

} // namespace givt::kernels
