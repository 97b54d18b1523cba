#include "givt/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>
#include <vector>

namespace givt::kernels {

namespace {

std::size_t initial_thread_count()
{
    std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GIVT_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap >= 1) {
                n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
            }
        } catch (...) {
            // malformed value: keep the hardware default
        }
    }
    return n;
}

std::atomic<std::size_t> g_threads{initial_thread_count()};

constexpr std::size_t min_parallel_work = 1u << 18;

} // namespace

std::size_t thread_count() { return g_threads.load(); }

void set_thread_count(std::size_t n) { g_threads.store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, std::size_t work, const std::function<void(std::size_t, std::size_t)>& body)
{
    const std::size_t threads = std::min(thread_count(), n);
    if (threads <= 1 || work < min_parallel_work) {
        body(0, n);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 1; t < threads; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b < e) {
            pool.emplace_back([&body, b, e] { body(b, e); });
        }
    }
    body(0, std::min(n, chunk));
}

template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate)
{
    parallel_for(m, m * k * n, [=](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            T* crow = c + i * n;
            if (!accumulate) {
                std::fill(crow, crow + n, T{0});
            }
            const T* arow = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const T av = arow[p];
                const T* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    });
}

template <typename T>
void gemm_tn(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate)
{
    parallel_for(k, m * k * n, [=](std::size_t p0, std::size_t p1) {
        for (std::size_t p = p0; p < p1; ++p) {
            T* crow = c + p * n;
            if (!accumulate) {
                std::fill(crow, crow + n, T{0});
            }
            for (std::size_t i = 0; i < m; ++i) {
                const T av = a[i * k + p];
                const T* grow = g + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += av * grow[j];
                }
            }
        }
    });
}

template <typename T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate)
{
    parallel_for(m, m * k * n, [=](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const T* grow = g + i * n;
            T* crow = c + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const T* brow = b + p * n;
                T acc{0};
                for (std::size_t j = 0; j < n; ++j) {
                    acc += grow[j] * brow[j];
                }
                crow[p] = accumulate ? crow[p] + acc : acc;
            }
        }
    });
}

template <typename T>
void layernorm_row(const T* x, const T* gain, T* out, std::size_t n, T& mean, T& rstd)
{
    T mu{0};
    for (std::size_t i = 0; i < n; ++i) {
        mu += x[i];
    }
    mu /= static_cast<T>(n);
    T var{0};
    for (std::size_t i = 0; i < n; ++i) {
        const T dx = x[i] - mu;
        var += dx * dx;
    }
    var /= static_cast<T>(n);
    const T r = T{1} / std::sqrt(var + static_cast<T>(layernorm_eps));
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = (x[i] - mu) * r * gain[i];
    }
    mean = mu;
    rstd = r;
}

namespace {
// sqrt(2 / pi) and the cubic coefficient of the tanh GELU approximation.
constexpr double gelu_c = 0.7978845608028654;
constexpr double gelu_a = 0.044715;
} // namespace

template <typename T>
T gelu(T x)
{
    const T u = static_cast<T>(gelu_c) * (x + static_cast<T>(gelu_a) * x * x * x);
    return T{0.5} * x * (T{1} + std::tanh(u));
}

template <typename T>
T gelu_grad(T x)
{
    const T u = static_cast<T>(gelu_c) * (x + static_cast<T>(gelu_a) * x * x * x);
    const T th = std::tanh(u);
    const T du = static_cast<T>(gelu_c) * (T{1} + T{3} * static_cast<T>(gelu_a) * x * x);
    return T{0.5} * (T{1} + th) + T{0.5} * x * (T{1} - th * th) * du;
}

template <typename T>
T softplus(T x)
{
    return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T sigmoid(T x)
{
    if (x >= T{0}) {
        return T{1} / (T{1} + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <typename T>
void attention_row(const T* q, const T* keys, const T* values, std::size_t n_keys, std::size_t width,
                   std::size_t heads, T* out, T* probs)
{
    const std::size_t hd = width / heads;
    const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(hd));
    std::vector<T> scratch(probs ? 0 : n_keys);
    for (std::size_t h = 0; h < heads; ++h) {
        T* p = probs ? probs + h * n_keys : scratch.data();
        const T* qh = q + h * hd;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < n_keys; ++j) {
            const T* kh = keys + j * width + h * hd;
            T s{0};
            for (std::size_t e = 0; e < hd; ++e) {
                s += qh[e] * kh[e];
            }
            s *= inv_sqrt;
            p[j] = s;
            mx = std::max(mx, s);
        }
        T z{0};
        for (std::size_t j = 0; j < n_keys; ++j) {
            p[j] = std::exp(p[j] - mx);
            z += p[j];
        }
        const T inv_z = T{1} / z;
        T* oh = out + h * hd;
        std::fill(oh, oh + hd, T{0});
        for (std::size_t j = 0; j < n_keys; ++j) {
            p[j] *= inv_z;
            const T* vh = values + j * width + h * hd;
            for (std::size_t e = 0; e < hd; ++e) {
                oh[e] += p[j] * vh[e];
            }
        }
    }
}

#define GIVT_INSTANTIATE_KERNELS(T)                                                                              \
    template void gemm<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);                  \
    template void gemm_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);               \
    template void gemm_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);               \
    template void layernorm_row<T>(const T*, const T*, T*, std::size_t, T&, T&);                                 \
    template T gelu<T>(T);                                                                                       \
    template T gelu_grad<T>(T);                                                                                  \
    template T softplus<T>(T);                                                                                   \
    template T sigmoid<T>(T);                                                                                    \
    template void attention_row<T>(const T*, const T*, const T*, std::size_t, std::size_t, std::size_t, T*, T*);

GIVT_INSTANTIATE_KERNELS(float)
GIVT_INSTANTIATE_KERNELS(double)

#undef GIVT_INSTANTIATE_KERNELS

} // namespace givt::kernels
