#include "givt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "givt/kernels.hpp"

namespace givt {

namespace {

enum class Broadcast { same, trailing, scalar };

template <typename T>
Broadcast classify(const Tensor<T>& a, const Tensor<T>& b, std::string_view op)
{
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa == sb) {
        return Broadcast::same;
    }
    if (b.size() == 1) {
        return Broadcast::scalar;
    }
    if (sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
        return Broadcast::trailing;
    }
    throw Error(ErrorCode::shape_mismatch,
                std::string(op) + ": cannot broadcast " + shape_str(sb) + " onto " + shape_str(sa));
}

// Reduces an output-shaped gradient onto the broadcast operand.
template <typename T>
void accumulate_broadcast(std::span<const T> g, std::vector<T>& gb, Broadcast mode, const T* factor = nullptr)
{
    const std::size_t nb = gb.size();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t j = mode == Broadcast::same ? i : (mode == Broadcast::scalar ? 0 : i % nb);
        gb[j] += factor ? g[i] * factor[i] : g[i];
    }
}

template <typename T>
std::size_t bidx(Broadcast mode, std::size_t i, std::size_t nb)
{
    return mode == Broadcast::same ? i : (mode == Broadcast::scalar ? 0 : i % nb);
}

template <typename T, typename F, typename DF>
Tensor<T> unary(std::string_view name, const Tensor<T>& a, F f, DF df)
{
    const auto x = a.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = f(x[i]);
    }
    return make_op_result<T>(name, a.shape(), std::move(y), {a}, [df](Node<T>& out) {
        auto& in = *out.inputs[0];
        if (!in.requires_grad) {
            return;
        }
        auto& gi = in.ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            gi[i] += out.grad[i] * df(in.value[i], out.value[i]);
        }
    });
}

std::size_t prod(const Shape& s, std::size_t b, std::size_t e)
{
    std::size_t n = 1;
    for (std::size_t i = b; i < e; ++i) {
        n *= s[i];
    }
    return n;
}

} // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b)
{
    if (b.size() > a.size()) {
        return add(b, a);
    }
    const Broadcast mode = classify(a, b, "add");
    const auto x = a.data();
    const auto z = b.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] + z[bidx<T>(mode, i, z.size())];
    }
    return make_op_result<T>("add", a.shape(), std::move(y), {a, b}, [mode](Node<T>& out) {
        auto& na = *out.inputs[0];
        auto& nb = *out.inputs[1];
        if (na.requires_grad) {
            auto& g = na.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += out.grad[i];
            }
        }
        if (nb.requires_grad) {
            accumulate_broadcast<T>(out.grad, nb.ensure_grad(), mode);
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b)
{
    const Broadcast mode = classify(a, b, "sub");
    const auto x = a.data();
    const auto z = b.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] - z[bidx<T>(mode, i, z.size())];
    }
    return make_op_result<T>("sub", a.shape(), std::move(y), {a, b}, [mode](Node<T>& out) {
        auto& na = *out.inputs[0];
        auto& nb = *out.inputs[1];
        if (na.requires_grad) {
            auto& g = na.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += out.grad[i];
            }
        }
        if (nb.requires_grad) {
            auto& g = nb.ensure_grad();
            for (std::size_t i = 0; i < out.grad.size(); ++i) {
                g[bidx<T>(mode, i, g.size())] -= out.grad[i];
            }
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b)
{
    if (b.size() > a.size()) {
        return mul(b, a);
    }
    const Broadcast mode = classify(a, b, "mul");
    const auto x = a.data();
    const auto z = b.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] * z[bidx<T>(mode, i, z.size())];
    }
    return make_op_result<T>("mul", a.shape(), std::move(y), {a, b}, [mode](Node<T>& out) {
        auto& na = *out.inputs[0];
        auto& nb = *out.inputs[1];
        const std::size_t nbs = nb.value.size();
        if (na.requires_grad) {
            auto& g = na.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += out.grad[i] * nb.value[bidx<T>(mode, i, nbs)];
            }
        }
        if (nb.requires_grad) {
            accumulate_broadcast<T>(out.grad, nb.ensure_grad(), mode, na.value.data());
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor)
{
    return unary<T>("scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset)
{
    return unary<T>("add_scalar", a, [offset](T x) { return x + offset; }, [](T, T) { return T{1}; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a)
{
    return unary<T>("gelu", a, [](T x) { return kernels::gelu(x); }, [](T x, T) { return kernels::gelu_grad(x); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a)
{
    return unary<T>("softplus", a, [](T x) { return kernels::softplus(x); },
                    [](T x, T) { return kernels::sigmoid(x); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a)
{
    for (T x : a.data()) {
        if (!std::isfinite(std::exp(x))) {
            throw Error(ErrorCode::domain, "exp overflow at input " + std::to_string(x));
        }
    }
    return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a)
{
    for (T x : a.data()) {
        if (!(x > T{0})) {
            throw Error(ErrorCode::domain, "log of non-positive value " + std::to_string(x));
        }
    }
    return unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a)
{
    return unary<T>("tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a)
{
    return unary<T>("sigmoid", a, [](T x) { return kernels::sigmoid(x); }, [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a)
{
    return unary<T>("square", a, [](T x) { return x * x; }, [](T x, T) { return T{2} * x; });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a)
{
    T s{0};
    for (T x : a.data()) {
        s += x;
    }
    return make_op_result<T>("sum", Shape{1}, {s}, {a}, [](Node<T>& out) {
        auto& in = *out.inputs[0];
        if (!in.requires_grad) {
            return;
        }
        auto& g = in.ensure_grad();
        for (T& v : g) {
            v += out.grad[0];
        }
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a)
{
    if (a.size() == 0) {
        throw Error(ErrorCode::shape_mismatch, "mean of empty tensor");
    }
    const T inv = T{1} / static_cast<T>(a.size());
    T s{0};
    for (T x : a.data()) {
        s += x;
    }
    return make_op_result<T>("mean", Shape{1}, {s * inv}, {a}, [inv](Node<T>& out) {
        auto& in = *out.inputs[0];
        if (!in.requires_grad) {
            return;
        }
        auto& g = in.ensure_grad();
        for (T& v : g) {
            v += out.grad[0] * inv;
        }
    });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b)
{
    if (b.rank() != 2 || a.rank() < 1) {
        throw Error(ErrorCode::shape_mismatch, "matmul expects a[..., k] and b[k, n], got " + shape_str(a.shape()) +
                                                   " and " + shape_str(b.shape()));
    }
    const std::size_t k = a.shape().back();
    if (b.dim(0) != k) {
        throw Error(ErrorCode::shape_mismatch,
                    "matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t n = b.dim(1);
    const std::size_t m = k == 0 ? 0 : a.size() / k;
    std::vector<T> c(m * n);
    kernels::gemm(a.data().data(), b.data().data(), c.data(), m, k, n, false);
    Shape out_shape = a.shape();
    out_shape.back() = n;
    return make_op_result<T>("matmul", std::move(out_shape), std::move(c), {a, b}, [m, k, n](Node<T>& out) {
        auto& na = *out.inputs[0];
        auto& nb = *out.inputs[1];
        if (na.requires_grad) {
            kernels::gemm_nt(out.grad.data(), nb.value.data(), na.ensure_grad().data(), m, k, n, true);
        }
        if (nb.requires_grad) {
            kernels::gemm_tn(na.value.data(), out.grad.data(), nb.ensure_grad().data(), m, k, n, true);
        }
    });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis)
{
    const Shape& s = x.shape();
    if (axis >= s.size()) {
        throw Error(ErrorCode::shape_mismatch, "softmax axis out of range for " + shape_str(s));
    }
    const std::size_t outer = prod(s, 0, axis);
    const std::size_t len = s[axis];
    const std::size_t inner = prod(s, axis + 1, s.size());
    const auto in = x.data();
    std::vector<T> y(in.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < len; ++j) {
                mx = std::max(mx, in[base + j * inner]);
            }
            T z{0};
            for (std::size_t j = 0; j < len; ++j) {
                const T e = std::exp(in[base + j * inner] - mx);
                y[base + j * inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < len; ++j) {
                y[base + j * inner] /= z;
            }
        }
    }
    return make_op_result<T>("softmax", s, std::move(y), {x}, [outer, len, inner](Node<T>& out) {
        auto& nx = *out.inputs[0];
        if (!nx.requires_grad) {
            return;
        }
        auto& g = nx.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t base = o * len * inner + i;
                T dot{0};
                for (std::size_t j = 0; j < len; ++j) {
                    dot += out.value[base + j * inner] * out.grad[base + j * inner];
                }
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t idx = base + j * inner;
                    g[idx] += out.value[idx] * (out.grad[idx] - dot);
                }
            }
        }
    });
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain)
{
    const std::size_t n = x.shape().back();
    if (gain.size() != n) {
        throw Error(ErrorCode::shape_mismatch,
                    "layernorm gain " + shape_str(gain.shape()) + " vs input " + shape_str(x.shape()));
    }
    const std::size_t rows = x.size() / n;
    std::vector<T> y(x.size());
    std::vector<T> stats(2 * rows);
    const T* xv = x.data().data();
    const T* gv = gain.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        kernels::layernorm_row(xv + r * n, gv, y.data() + r * n, n, stats[2 * r], stats[2 * r + 1]);
    }
    return make_op_result<T>(
        "layernorm", x.shape(), std::move(y), {x, gain}, [rows, n, stats = std::move(stats)](Node<T>& out) {
            auto& nx = *out.inputs[0];
            auto& ng = *out.inputs[1];
            std::vector<T> xhat(n), dxhat(n);
            for (std::size_t r = 0; r < rows; ++r) {
                const T mu = stats[2 * r];
                const T rs = stats[2 * r + 1];
                const T* xr = nx.value.data() + r * n;
                const T* gr = out.grad.data() + r * n;
                T mean_d{0}, mean_dx{0};
                for (std::size_t i = 0; i < n; ++i) {
                    xhat[i] = (xr[i] - mu) * rs;
                    dxhat[i] = gr[i] * ng.value[i];
                    mean_d += dxhat[i];
                    mean_dx += dxhat[i] * xhat[i];
                }
                mean_d /= static_cast<T>(n);
                mean_dx /= static_cast<T>(n);
                if (ng.requires_grad) {
                    auto& gg = ng.ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) {
                        gg[i] += gr[i] * xhat[i];
                    }
                }
                if (nx.requires_grad) {
                    T* gx = nx.ensure_grad().data() + r * n;
                    for (std::size_t i = 0; i < n; ++i) {
                        gx[i] += rs * (dxhat[i] - mean_d - xhat[i] * mean_dx);
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape)
{
    if (numel(shape) != x.size()) {
        throw Error(ErrorCode::shape_mismatch, "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<T> y(x.data().begin(), x.data().end());
    return make_op_result<T>("reshape", std::move(shape), std::move(y), {x}, [](Node<T>& out) {
        auto& nx = *out.inputs[0];
        if (!nx.requires_grad) {
            return;
        }
        auto& g = nx.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += out.grad[i];
        }
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis)
{
    if (parts.empty()) {
        throw Error(ErrorCode::invalid_argument, "concat of zero tensors");
    }
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) {
        throw Error(ErrorCode::shape_mismatch, "concat axis out of range");
    }
    std::vector<std::size_t> lens;
    Shape out_shape = s0;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size()) {
            throw Error(ErrorCode::shape_mismatch, "concat rank mismatch");
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != s0[i]) {
                throw Error(ErrorCode::shape_mismatch,
                            "concat extents differ: " + shape_str(s) + " vs " + shape_str(s0));
            }
        }
        lens.push_back(s[axis]);
        out_shape[axis] += s[axis];
    }
    const std::size_t outer = prod(s0, 0, axis);
    const std::size_t inner = prod(s0, axis + 1, s0.size());
    const std::size_t total = out_shape[axis];
    std::vector<T> y(numel(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const auto src = parts[p].data().subspan(o * lens[p] * inner, lens[p] * inner);
            std::copy(src.begin(), src.end(), y.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
            offset += lens[p];
        }
    }
    return make_op_result<T>("concat", std::move(out_shape), std::move(y), parts,
                             [outer, inner, total, lens](Node<T>& out) {
                                 std::size_t offset = 0;
                                 for (std::size_t p = 0; p < lens.size(); ++p) {
                                     auto& np = *out.inputs[p];
                                     if (np.requires_grad) {
                                         auto& g = np.ensure_grad();
                                         for (std::size_t o = 0; o < outer; ++o) {
                                             const T* src = out.grad.data() + (o * total + offset) * inner;
                                             T* dst = g.data() + o * lens[p] * inner;
                                             for (std::size_t i = 0; i < lens[p] * inner; ++i) {
                                                 dst[i] += src[i];
                                             }
                                         }
                                     }
                                     offset += lens[p];
                                 }
                             });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end)
{
    const Shape& s = x.shape();
    if (axis >= s.size() || begin > end || end > s[axis]) {
        throw Error(ErrorCode::shape_mismatch, "slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                                                   ") on axis " + std::to_string(axis) + " of " + shape_str(s));
    }
    const std::size_t outer = prod(s, 0, axis);
    const std::size_t inner = prod(s, axis + 1, s.size());
    const std::size_t len = s[axis];
    const std::size_t w = end - begin;
    Shape out_shape = s;
    out_shape[axis] = w;
    std::vector<T> y(outer * w * inner);
    const auto in = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner), w * inner,
                    y.begin() + static_cast<std::ptrdiff_t>(o * w * inner));
    }
    return make_op_result<T>("slice", std::move(out_shape), std::move(y), {x},
                             [outer, inner, len, begin, w](Node<T>& out) {
                                 auto& nx = *out.inputs[0];
                                 if (!nx.requires_grad) {
                                     return;
                                 }
                                 auto& g = nx.ensure_grad();
                                 for (std::size_t o = 0; o < outer; ++o) {
                                     for (std::size_t i = 0; i < w * inner; ++i) {
                                         g[(o * len + begin) * inner + i] += out.grad[o * w * inner + i];
                                     }
                                 }
                             });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> indices)
{
    if (table.rank() != 2) {
        throw Error(ErrorCode::shape_mismatch, "gather_rows expects a 2-D table");
    }
    const std::size_t rows = table.dim(0);
    const std::size_t width = table.dim(1);
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    std::vector<T> y(idx.size() * width);
    const auto tv = table.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= rows) {
            throw Error(ErrorCode::invalid_argument,
                        "gather index " + std::to_string(idx[r]) + " >= " + std::to_string(rows));
        }
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(idx[r] * width), width,
                    y.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
    return make_op_result<T>("gather_rows", Shape{idx.size(), width}, std::move(y), {table},
                             [idx, width](Node<T>& out) {
                                 auto& nt = *out.inputs[0];
                                 if (!nt.requires_grad) {
                                     return;
                                 }
                                 auto& g = nt.ensure_grad();
                                 for (std::size_t r = 0; r < idx.size(); ++r) {
                                     for (std::size_t c = 0; c < width; ++c) {
                                         g[idx[r] * width + c] += out.grad[r * width + c];
                                     }
                                 }
                             });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads, bool causal)
{
    if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
        throw Error(ErrorCode::shape_mismatch, "attention expects equal [batch, seq, width] q/k/v");
    }
    const std::size_t batch = q.dim(0);
    const std::size_t seq = q.dim(1);
    const std::size_t width = q.dim(2);
    if (heads == 0 || width % heads != 0) {
        throw Error(ErrorCode::invalid_argument, "width not divisible by heads");
    }
    std::vector<T> y(q.size());
    auto probs = std::make_shared<std::vector<T>>(batch * seq * heads * seq, T{0});
    const T* qv = q.data().data();
    const T* kv = k.data().data();
    const T* vv = v.data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = b * seq * width;
        for (std::size_t i = 0; i < seq; ++i) {
            const std::size_t n_keys = causal ? i + 1 : seq;
            T* p = probs->data() + (b * seq + i) * heads * seq;
            // probs row layout: heads x seq; attention_row writes heads x n_keys contiguously
            std::vector<T> tmp(heads * n_keys);
            kernels::attention_row(qv + off + i * width, kv + off, vv + off, n_keys, width, heads,
                                   y.data() + off + i * width, tmp.data());
            for (std::size_t h = 0; h < heads; ++h) {
                std::copy_n(tmp.data() + h * n_keys, n_keys, p + h * seq);
            }
        }
    }
    return make_op_result<T>(
        "attention", q.shape(), std::move(y), {q, k, v}, [batch, seq, width, heads, causal, probs](Node<T>& out) {
            auto& nq = *out.inputs[0];
            auto& nk = *out.inputs[1];
            auto& nv = *out.inputs[2];
            const std::size_t hd = width / heads;
            const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(hd));
            std::vector<T> gq(nq.value.size(), T{0}), gk(nk.value.size(), T{0}), gv(nv.value.size(), T{0});
            std::vector<T> dp(seq);
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t off = b * seq * width;
                for (std::size_t i = 0; i < seq; ++i) {
                    const std::size_t n_keys = causal ? i + 1 : seq;
                    const T* p_row = probs->data() + (b * seq + i) * heads * seq;
                    const T* go = out.grad.data() + off + i * width;
                    for (std::size_t h = 0; h < heads; ++h) {
                        const T* p = p_row + h * seq;
                        const T* goh = go + h * hd;
                        T dot{0};
                        for (std::size_t j = 0; j < n_keys; ++j) {
                            const T* vh = nv.value.data() + off + j * width + h * hd;
                            T s{0};
                            for (std::size_t e = 0; e < hd; ++e) {
                                s += goh[e] * vh[e];
                            }
                            dp[j] = s;
                            dot += p[j] * s;
                            T* gvh = gv.data() + off + j * width + h * hd;
                            for (std::size_t e = 0; e < hd; ++e) {
                                gvh[e] += p[j] * goh[e];
                            }
                        }
                        const T* qh = nq.value.data() + off + i * width + h * hd;
                        T* gqh = gq.data() + off + i * width + h * hd;
                        for (std::size_t j = 0; j < n_keys; ++j) {
                            const T ds = p[j] * (dp[j] - dot) * inv_sqrt;
                            const T* kh = nk.value.data() + off + j * width + h * hd;
                            T* gkh = gk.data() + off + j * width + h * hd;
                            for (std::size_t e = 0; e < hd; ++e) {
                                gqh[e] += ds * kh[e];
                                gkh[e] += ds * qh[e];
                            }
                        }
                    }
                }
            }
            auto flush = [](Node<T>& n, const std::vector<T>& g) {
                if (!n.requires_grad) {
                    return;
                }
                auto& dst = n.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    dst[i] += g[i];
                }
            };
            flush(nq, gq);
            flush(nk, gk);
            flush(nv, gv);
        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad)
{
    if (x.rank() != 4 || weight.rank() != 4 || weight.dim(2) != x.dim(3)) {
        throw Error(ErrorCode::shape_mismatch,
                    "conv2d expects x[n,h,w,c], w[kh,kw,c,o]; got " + shape_str(x.shape()) + ", " +
                        shape_str(weight.shape()));
    }
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const std::size_t kh = weight.dim(0), kw = weight.dim(1), o = weight.dim(3);
    if (bias.defined() && bias.size() != o) {
        throw Error(ErrorCode::shape_mismatch, "conv2d bias extent mismatch");
    }
    if (stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw) {
        throw Error(ErrorCode::shape_mismatch, "conv2d kernel larger than padded input");
    }
    const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
    const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
    const std::size_t rows = n * ho * wo;
    const std::size_t cols = kh * kw * c;
    auto col = std::make_shared<std::vector<T>>(rows * cols, T{0});
    const auto xv = x.data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                T* crow = col->data() + ((b * ho + oy) * wo + ox) * cols;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                        continue;
                    }
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) {
                            continue;
                        }
                        const T* src = xv.data() + ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c;
                        std::copy_n(src, c, crow + (ky * kw + kx) * c);
                    }
                }
            }
        }
    }
    std::vector<T> y(rows * o);
    kernels::gemm(col->data(), weight.data().data(), y.data(), rows, cols, o, false);
    if (bias.defined()) {
        const auto bv = bias.data();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < o; ++j) {
                y[r * o + j] += bv[j];
            }
        }
    }
    std::vector<Tensor<T>> inputs{x, weight};
    if (bias.defined()) {
        inputs.push_back(bias);
    }
    return make_op_result<T>(
        "conv2d", Shape{n, ho, wo, o}, std::move(y), std::move(inputs),
        [=](Node<T>& out) {
            auto& nx = *out.inputs[0];
            auto& nw = *out.inputs[1];
            if (nw.requires_grad) {
                kernels::gemm_tn(col->data(), out.grad.data(), nw.ensure_grad().data(), rows, cols, o, true);
            }
            if (out.inputs.size() > 2 && out.inputs[2]->requires_grad) {
                auto& gb = out.inputs[2]->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < o; ++j) {
                        gb[j] += out.grad[r * o + j];
                    }
                }
            }
            if (nx.requires_grad) {
                std::vector<T> dcol(rows * cols);
                kernels::gemm_nt(out.grad.data(), nw.value.data(), dcol.data(), rows, cols, o, false);
                auto& gx = nx.ensure_grad();
                for (std::size_t b = 0; b < n; ++b) {
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const T* drow = dcol.data() + ((b * ho + oy) * wo + ox) * cols;
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                          static_cast<std::ptrdiff_t>(pad);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                                    continue;
                                }
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                              static_cast<std::ptrdiff_t>(pad);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) {
                                        continue;
                                    }
                                    T* dst = gx.data() +
                                             ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c;
                                    const T* src = drow + (ky * kw + kx) * c;
                                    for (std::size_t ch = 0; ch < c; ++ch) {
                                        dst[ch] += src[ch];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x)
{
    if (x.rank() != 4) {
        throw Error(ErrorCode::shape_mismatch, "upsample2x expects NHWC input");
    }
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    std::vector<T> y(n * 4 * h * w * c);
    const auto xv = x.data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oy = 0; oy < 2 * h; ++oy) {
            for (std::size_t ox = 0; ox < 2 * w; ++ox) {
                const T* src = xv.data() + ((b * h + oy / 2) * w + ox / 2) * c;
                std::copy_n(src, c, y.data() + ((b * 2 * h + oy) * 2 * w + ox) * c);
            }
        }
    }
    return make_op_result<T>("upsample2x", Shape{n, 2 * h, 2 * w, c}, std::move(y), {x}, [n, h, w, c](Node<T>& out) {
        auto& nx = *out.inputs[0];
        if (!nx.requires_grad) {
            return;
        }
        auto& g = nx.ensure_grad();
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t oy = 0; oy < 2 * h; ++oy) {
                for (std::size_t ox = 0; ox < 2 * w; ++ox) {
                    T* dst = g.data() + ((b * h + oy / 2) * w + ox / 2) * c;
                    const T* src = out.grad.data() + ((b * 2 * h + oy) * 2 * w + ox) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        dst[ch] += src[ch];
                    }
                }
            }
        }
    });
}

template <typename T>
Tensor<T> gmm_nll(const Tensor<T>& head, std::span<const T> target, std::span<const T> row_weights, std::size_t d,
                  std::size_t k, T sigma_floor)
{
    const std::size_t width = 3 * d * k;
    if (d == 0 || k == 0 || head.shape().back() != width) {
        throw Error(ErrorCode::shape_mismatch,
                    "gmm head last extent must be 3*d*k = " + std::to_string(width) + ", got " + shape_str(head.shape()));
    }
    const std::size_t rows = head.size() / width;
    if (target.size() != rows * d) {
        throw Error(ErrorCode::shape_mismatch, "gmm target has " + std::to_string(target.size()) + " values, expected " +
                                                   std::to_string(rows * d));
    }
    if (!row_weights.empty() && row_weights.size() != rows) {
        throw Error(ErrorCode::shape_mismatch, "gmm row weight count mismatch");
    }
    for (T t : target) {
        if (!std::isfinite(t)) {
            throw Error(ErrorCode::non_finite, "gmm target contains a non-finite value");
        }
    }
    std::vector<T> weights(rows, T{1});
    if (!row_weights.empty()) {
        std::copy(row_weights.begin(), row_weights.end(), weights.begin());
    }
    T total_w{0};
    for (T wv : weights) {
        total_w += wv;
    }
    if (!(total_w > T{0})) {
        throw Error(ErrorCode::invalid_argument, "gmm row weights sum to zero");
    }
    const T norm = T{1} / (total_w * static_cast<T>(d));
    const T half_log_2pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));

    // responsibilities and mixture weights are saved for the backward pass
    auto resp = std::make_shared<std::vector<T>>(rows * d * k);
    auto pis = std::make_shared<std::vector<T>>(rows * d * k);
    std::vector<T> a(k);
    const auto hv = head.data();
    T loss{0};
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = hv.data() + r * width;
        T row_nll{0};
        for (std::size_t c = 0; c < d; ++c) {
            const T x = target[r * d + c];
            T lmax = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                lmax = std::max(lmax, row[2 * d * k + c * k + j]);
            }
            T lz{0};
            for (std::size_t j = 0; j < k; ++j) {
                lz += std::exp(row[2 * d * k + c * k + j] - lmax);
            }
            const T log_norm = lmax + std::log(lz);
            T amax = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                const T mu = row[c * k + j];
                const T sigma = kernels::softplus(row[d * k + c * k + j]) + sigma_floor;
                const T zscore = (x - mu) / sigma;
                const T log_pi = row[2 * d * k + c * k + j] - log_norm;
                (*pis)[(r * d + c) * k + j] = std::exp(log_pi);
                a[j] = log_pi - T{0.5} * zscore * zscore - std::log(sigma) - half_log_2pi;
                amax = std::max(amax, a[j]);
            }
            T az{0};
            for (std::size_t j = 0; j < k; ++j) {
                az += std::exp(a[j] - amax);
            }
            const T ll = amax + std::log(az);
            for (std::size_t j = 0; j < k; ++j) {
                (*resp)[(r * d + c) * k + j] = std::exp(a[j] - ll);
            }
            row_nll -= ll;
        }
        loss += weights[r] * row_nll;
    }
    loss *= norm;
    std::vector<T> tgt(target.begin(), target.end());
    return make_op_result<T>(
        "gmm_nll", Shape{1}, {loss}, {head},
        [=, tgt = std::move(tgt), weights = std::move(weights)](Node<T>& out) {
            auto& nh = *out.inputs[0];
            if (!nh.requires_grad) {
                return;
            }
            auto& g = nh.ensure_grad();
            const T upstream = out.grad[0] * norm;
            for (std::size_t r = 0; r < rows; ++r) {
                if (weights[r] == T{0}) {
                    continue;
                }
                const T s = upstream * weights[r];
                const T* row = nh.value.data() + r * width;
                T* grow = g.data() + r * width;
                for (std::size_t c = 0; c < d; ++c) {
                    const T x = tgt[r * d + c];
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::size_t ij = c * k + j;
                        const T gamma = (*resp)[(r * d + c) * k + j];
                        const T raw = row[d * k + ij];
                        const T sigma = kernels::softplus(raw) + sigma_floor;
                        const T diff = x - row[ij];
                        // d(-log p)/d(mean), /d(sigma) and /d(logit)
                        grow[ij] += s * (-gamma * diff / (sigma * sigma));
                        const T dsig = -gamma * (diff * diff / (sigma * sigma * sigma) - T{1} / sigma);
                        grow[d * k + ij] += s * dsig * kernels::sigmoid(raw);
                        grow[2 * d * k + ij] += s * ((*pis)[(r * d + c) * k + j] - gamma);
                    }
                }
            }
        });
}

#define GIVT_INSTANTIATE_OPS(T)                                                                                  \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                                            \
    template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                                       \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                                                \
    template Tensor<T> softplus<T>(const Tensor<T>&);                                                            \
    template Tensor<T> exp<T>(const Tensor<T>&);                                                                 \
    template Tensor<T> log<T>(const Tensor<T>&);                                                                 \
    template Tensor<T> tanh<T>(const Tensor<T>&);                                                                \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                             \
    template Tensor<T> square<T>(const Tensor<T>&);                                                              \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                                 \
    template Tensor<T> mean<T>(const Tensor<T>&);                                                                \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                                                \
    template Tensor<T> layernorm<T>(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                      \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                                    \
    template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                        \
    template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const std::size_t>);                           \
    template Tensor<T> attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, bool);    \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
    template Tensor<T> upsample2x<T>(const Tensor<T>&);                                                          \
    template Tensor<T> gmm_nll<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, std::size_t,         \
                                  std::size_t, T);

GIVT_INSTANTIATE_OPS(float)
GIVT_INSTANTIATE_OPS(double)

#undef GIVT_INSTANTIATE_OPS

} // namespace givt
