#include "givt/model.hpp"

#include <algorithm>
#include <cmath>

#include "givt/kernels.hpp"
#include "givt/ops.hpp"

namespace givt {

std::string to_string(GivtMode mode)
{
    return mode == GivtMode::causal ? "causal" : "maskgit";
}

GivtMode parse_mode(const std::string& name)
{
    if (name == "causal") {
        return GivtMode::causal;
    }
    if (name == "maskgit") {
        return GivtMode::maskgit;
    }
    throw Error(ErrorCode::invalid_argument, "unknown GIVT mode '" + name + "'");
}

std::size_t GivtConfig::parameter_count() const
{
    const std::size_t h = hidden;
    std::size_t n = d * embed_width();
    n += (num_classes + 1) * h;
    n += context_length() * h;
    if (mode == GivtMode::maskgit) {
        n += h; // [UNMASK] and [MASK], hidden/2 each
    }
    n += layers * (2 * h + 4 * h * h + 2 * h * mlp_hidden);
    n += h;
    n += head_width() * (h + 1);
    return n;
}

void GivtConfig::validate() const
{
    if (layers < 1 || heads < 1 || hidden < 1 || mlp_hidden < 1 || d < 1 || k < 1 || tokens < 1 || num_classes < 1) {
        throw Error(ErrorCode::invalid_argument, "GIVT extents must all be >= 1");
    }
    if (hidden % heads != 0) {
        throw Error(ErrorCode::invalid_argument, "hidden must be divisible by heads");
    }
    if (mode == GivtMode::maskgit && hidden % 2 != 0) {
        throw Error(ErrorCode::invalid_argument, "maskgit mode needs an even hidden width");
    }
    if (mode == GivtMode::causal && tokens < 2) {
        throw Error(ErrorCode::invalid_argument, "causal mode needs at least two tokens");
    }
    if (!(label_dropout >= 0.0 && label_dropout <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "label_dropout must lie in [0, 1]");
    }
    if (!(sigma_floor > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "sigma floor must be > 0");
    }
}

std::size_t ConditionLabel::resolve(const GivtConfig& cfg) const
{
    if (!cls_) {
        return cfg.null_class();
    }
    if (*cls_ >= cfg.num_classes) {
        throw Error(ErrorCode::invalid_argument,
                    "class " + std::to_string(*cls_) + " out of range for " + std::to_string(cfg.num_classes) + " classes");
    }
    return *cls_;
}

std::size_t MaskState::count() const
{
    return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), std::uint8_t{1}));
}

template <typename T>
GivtModel<T>::GivtModel(GivtConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg))
{
    cfg_.validate();
    Rng rng(RngKey(seed).child("givt_init"));
    const std::size_t h = cfg_.hidden;
    const auto fan_in = [](std::size_t n) { return static_cast<T>(1.0 / std::sqrt(static_cast<double>(n))); };
    const T residual_scale = static_cast<T>(1.0 / std::sqrt(2.0 * static_cast<double>(cfg_.layers)));

    params_.add("embed.in", Tensor<T>::randn({cfg_.d, cfg_.embed_width()}, fan_in(cfg_.d), rng));
    params_.add("embed.class", Tensor<T>::randn({cfg_.num_classes + 1, h}, T{0.02}, rng));
    params_.add("embed.pos", Tensor<T>::randn({cfg_.context_length(), h}, T{0.02}, rng));
    if (cfg_.mode == GivtMode::maskgit) {
        // row 0 = [UNMASK], row 1 = [MASK]
        params_.add("embed.mask_tokens", Tensor<T>::randn({2, h / 2}, T{0.02}, rng));
    }
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string b = "block" + std::to_string(l) + ".";
        params_.add(b + "ln1.gain", Tensor<T>::full({h}, T{1}));
        params_.add(b + "attn.q", Tensor<T>::randn({h, h}, fan_in(h), rng));
        params_.add(b + "attn.k", Tensor<T>::randn({h, h}, fan_in(h), rng));
        params_.add(b + "attn.v", Tensor<T>::randn({h, h}, fan_in(h), rng));
        params_.add(b + "attn.o", Tensor<T>::randn({h, h}, fan_in(h) * residual_scale, rng));
        params_.add(b + "ln2.gain", Tensor<T>::full({h}, T{1}));
        params_.add(b + "mlp.fc1", Tensor<T>::randn({h, cfg_.mlp_hidden}, fan_in(h), rng));
        params_.add(b + "mlp.fc2", Tensor<T>::randn({cfg_.mlp_hidden, h}, fan_in(cfg_.mlp_hidden) * residual_scale, rng));
    }
    params_.add("final.ln.gain", Tensor<T>::full({h}, T{1}));
    params_.add("head.w", Tensor<T>::randn({h, cfg_.head_width()}, fan_in(h) * T{0.1}, rng));
    params_.add("head.b", Tensor<T>::zeros({cfg_.head_width()}));
}

template <typename T>
Tensor<T> GivtModel<T>::embed_causal(std::span<const T> z_inputs, std::span<const std::size_t> labels,
                                     std::size_t batch) const
{
    const std::size_t n_in = cfg_.tokens - 1;
    if (z_inputs.size() != batch * n_in * cfg_.d || labels.size() != batch) {
        throw Error(ErrorCode::shape_mismatch, "causal embedding expects batch x (tokens-1) x d inputs and one label per example");
    }
    const std::size_t h = cfg_.hidden;
    const Tensor<T> tokens(Shape{batch, n_in, cfg_.d}, std::vector<T>(z_inputs.begin(), z_inputs.end()));
    const Tensor<T> embedded = matmul(tokens, p("embed.in"));
    const Tensor<T> cls = reshape(gather_rows(p("embed.class"), labels), Shape{batch, 1, h});
    const Tensor<T> seq = concat<T>({cls, embedded}, 1);
    return add(seq, p("embed.pos"));
}

template <typename T>
Tensor<T> GivtModel<T>::embed_maskgit(std::span<const T> z, std::span<const std::uint8_t> mask,
                                      std::span<const std::size_t> labels, std::size_t batch) const
{
    const std::size_t n = cfg_.tokens;
    if (z.size() != batch * n * cfg_.d || mask.size() != batch * n || labels.size() != batch) {
        throw Error(ErrorCode::shape_mismatch, "maskgit embedding expects batch x tokens x d inputs and a matching mask");
    }
    const std::size_t h = cfg_.hidden;
    std::vector<T> zeroed(z.begin(), z.end());
    std::vector<std::size_t> special(batch * n);
    for (std::size_t i = 0; i < batch * n; ++i) {
        special[i] = mask[i] ? 1 : 0;
        if (mask[i]) {
            std::fill_n(zeroed.begin() + static_cast<std::ptrdiff_t>(i * cfg_.d), cfg_.d, T{0});
        }
    }
    const Tensor<T> tokens(Shape{batch, n, cfg_.d}, std::move(zeroed));
    const Tensor<T> embedded = matmul(tokens, p("embed.in"));
    const Tensor<T> markers = reshape(gather_rows(p("embed.mask_tokens"), special), Shape{batch, n, h / 2});
    const Tensor<T> body = concat<T>({embedded, markers}, 2);
    const Tensor<T> cls = reshape(gather_rows(p("embed.class"), labels), Shape{batch, 1, h});
    return add(concat<T>({cls, body}, 1), p("embed.pos"));
}

template <typename T>
Tensor<T> GivtModel<T>::forward(const Tensor<T>& hidden) const
{
    if (hidden.rank() != 3 || hidden.dim(2) != cfg_.hidden || hidden.dim(1) != cfg_.context_length()) {
        throw Error(ErrorCode::shape_mismatch, "forward expects [batch, " + std::to_string(cfg_.context_length()) +
                                                   ", " + std::to_string(cfg_.hidden) + "], got " +
                                                   shape_str(hidden.shape()));
    }
    const bool causal = cfg_.mode == GivtMode::causal;
    Tensor<T> x = hidden;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string b = "block" + std::to_string(l) + ".";
        const Tensor<T> a = layernorm(x, p(b + "ln1.gain"));
        const Tensor<T> att = attention(matmul(a, p(b + "attn.q")), matmul(a, p(b + "attn.k")),
                                        matmul(a, p(b + "attn.v")), cfg_.heads, causal);
        x = add(x, matmul(att, p(b + "attn.o")));
        const Tensor<T> m = layernorm(x, p(b + "ln2.gain"));
        x = add(x, matmul(gelu(matmul(m, p(b + "mlp.fc1"))), p(b + "mlp.fc2")));
    }
    const Tensor<T> out = layernorm(x, p("final.ln.gain"));
    return add(matmul(out, p("head.w")), p("head.b"));
}

template <typename T>
std::size_t GivtModel<T>::dropped_label(std::size_t label, const RngKey& key) const
{
    if (cfg_.label_dropout <= 0.0) {
        return label;
    }
    Rng rng(key.child("label_dropout"));
    return rng.uniform() < cfg_.label_dropout ? cfg_.null_class() : label;
}

template <typename T>
MaskState GivtModel<T>::training_mask(const RngKey& key) const
{
    const std::size_t n = cfg_.tokens;
    Rng rng(key.child("mask"));
    double u = rng.uniform();
    while (u <= 0.0) {
        u = rng.uniform();
    }
    const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(u * static_cast<double>(n))));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    // partial Fisher-Yates: the first `count` entries are the masked positions
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(order[i], order[j]);
    }
    MaskState m;
    m.masked.assign(n, 0);
    for (std::size_t i = 0; i < std::max<std::size_t>(count, 1); ++i) {
        m.masked[order[i]] = 1;
    }
    return m;
}

template <typename T>
Tensor<T> GivtModel<T>::loss_causal(const LatentBatch<T>& batch) const
{
    const std::size_t n = cfg_.tokens;
    const std::size_t d = cfg_.d;
    if (batch.z.size() != batch.size * n * d || batch.labels.size() != batch.size || batch.keys.size() != batch.size) {
        throw Error(ErrorCode::shape_mismatch, "latent batch does not match config");
    }
    std::vector<T> inputs(batch.size * (n - 1) * d);
    std::vector<std::size_t> labels(batch.size);
    for (std::size_t b = 0; b < batch.size; ++b) {
        std::copy_n(batch.z.begin() + static_cast<std::ptrdiff_t>(b * n * d), (n - 1) * d,
                    inputs.begin() + static_cast<std::ptrdiff_t>(b * (n - 1) * d));
        labels[b] = batch.drop_labels ? dropped_label(batch.labels[b], batch.keys[b]) : batch.labels[b];
    }
    const Tensor<T> head = forward(embed_causal(inputs, labels, batch.size));
    return gmm_nll<T>(head, batch.z, {}, d, cfg_.k, static_cast<T>(cfg_.sigma_floor));
}

template <typename T>
Tensor<T> GivtModel<T>::loss_maskgit(const LatentBatch<T>& batch) const
{
    const std::size_t n = cfg_.tokens;
    const std::size_t d = cfg_.d;
    if (batch.z.size() != batch.size * n * d || batch.labels.size() != batch.size || batch.keys.size() != batch.size) {
        throw Error(ErrorCode::shape_mismatch, "latent batch does not match config");
    }
    std::vector<std::uint8_t> mask(batch.size * n);
    std::vector<T> weights(batch.size * n);
    std::vector<std::size_t> labels(batch.size);
    for (std::size_t b = 0; b < batch.size; ++b) {
        const MaskState m = training_mask(batch.keys[b]);
        for (std::size_t i = 0; i < n; ++i) {
            mask[b * n + i] = m.masked[i];
            weights[b * n + i] = m.masked[i] ? T{1} : T{0};
        }
        labels[b] = batch.drop_labels ? dropped_label(batch.labels[b], batch.keys[b]) : batch.labels[b];
    }
    const Tensor<T> head = forward(embed_maskgit(batch.z, mask, labels, batch.size));
    const Tensor<T> token_head = slice(head, 1, 1, n + 1);
    return gmm_nll<T>(token_head, batch.z, weights, d, cfg_.k, static_cast<T>(cfg_.sigma_floor));
}

template <typename T>
Tensor<T> GivtModel<T>::loss(const LatentBatch<T>& batch) const
{
    return cfg_.mode == GivtMode::causal ? loss_causal(batch) : loss_maskgit(batch);
}

template <typename T>
KvCache<T> GivtModel<T>::new_cache() const
{
    KvCache<T> c;
    c.keys.resize(cfg_.layers);
    c.values.resize(cfg_.layers);
    return c;
}

template <typename T>
std::vector<T> GivtModel<T>::causal_input_row(std::size_t row, std::size_t label, std::span<const double> prev_token) const
{
    const std::size_t h = cfg_.hidden;
    std::vector<T> out(h);
    const auto pos = p("embed.pos").data().subspan(row * h, h);
    if (row == 0) {
        const auto cls = p("embed.class").data().subspan(label * h, h);
        for (std::size_t i = 0; i < h; ++i) {
            out[i] = cls[i] + pos[i];
        }
        return out;
    }
    if (prev_token.size() != cfg_.d) {
        throw Error(ErrorCode::shape_mismatch, "previous token must have d channels");
    }
    std::vector<T> tok(prev_token.begin(), prev_token.end());
    std::vector<T> emb(h);
    kernels::gemm(tok.data(), p("embed.in").data().data(), emb.data(), 1, cfg_.d, h, false);
    for (std::size_t i = 0; i < h; ++i) {
        out[i] = emb[i] + pos[i];
    }
    return out;
}

template <typename T>
std::vector<T> GivtModel<T>::maskgit_input_rows(std::span<const double> z, const MaskState& mask,
                                                std::size_t label) const
{
    const std::size_t n = cfg_.tokens;
    const std::size_t h = cfg_.hidden;
    const std::size_t half = h / 2;
    if (z.size() != n * cfg_.d || mask.masked.size() != n) {
        throw Error(ErrorCode::shape_mismatch, "maskgit state does not match config");
    }
    std::vector<T> rows((n + 1) * h);
    const auto pos = p("embed.pos").data();
    const auto cls = p("embed.class").data().subspan(label * h, h);
    for (std::size_t i = 0; i < h; ++i) {
        rows[i] = cls[i] + pos[i];
    }
    std::vector<T> tokens(n * cfg_.d);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < cfg_.d; ++c) {
            tokens[t * cfg_.d + c] = mask.masked[t] ? T{0} : static_cast<T>(z[t * cfg_.d + c]);
        }
    }
    std::vector<T> emb(n * half);
    kernels::gemm(tokens.data(), p("embed.in").data().data(), emb.data(), n, cfg_.d, half, false);
    const auto markers = p("embed.mask_tokens").data();
    for (std::size_t t = 0; t < n; ++t) {
        T* row = rows.data() + (t + 1) * h;
        const T* prow = pos.data() + (t + 1) * h;
        const T* mrow = markers.data() + (mask.masked[t] ? half : 0);
        for (std::size_t i = 0; i < half; ++i) {
            row[i] = emb[t * half + i] + prow[i];
            row[half + i] = mrow[i] + prow[half + i];
        }
    }
    return rows;
}

template <typename T>
std::vector<T> GivtModel<T>::infer_rows(std::span<const T> rows, std::size_t n_rows, KvCache<T>& cache,
                                        bool causal) const
{
    const std::size_t h = cfg_.hidden;
    if (rows.size() != n_rows * h) {
        throw Error(ErrorCode::shape_mismatch, "infer_rows input does not match n_rows x hidden");
    }
    if (cache.length + n_rows > cfg_.context_length()) {
        throw Error(ErrorCode::invalid_argument, "sequence exceeds the model context");
    }
    const std::size_t base = cache.length;
    std::vector<T> x(rows.begin(), rows.end());
    std::vector<T> a(n_rows * h), q(n_rows * h), kv(n_rows * h), att(n_rows * h), proj(n_rows * h);
    std::vector<T> mlp(n_rows * cfg_.mlp_hidden);
    T mu{}, rs{};
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string b = "block" + std::to_string(l) + ".";
        for (std::size_t r = 0; r < n_rows; ++r) {
            kernels::layernorm_row(x.data() + r * h, p(b + "ln1.gain").data().data(), a.data() + r * h, h, mu, rs);
        }
        kernels::gemm(a.data(), p(b + "attn.q").data().data(), q.data(), n_rows, h, h, false);
        auto& keys = cache.keys[l];
        auto& values = cache.values[l];
        kernels::gemm(a.data(), p(b + "attn.k").data().data(), kv.data(), n_rows, h, h, false);
        keys.insert(keys.end(), kv.begin(), kv.end());
        kernels::gemm(a.data(), p(b + "attn.v").data().data(), kv.data(), n_rows, h, h, false);
        values.insert(values.end(), kv.begin(), kv.end());
        std::vector<T> probs;
        for (std::size_t r = 0; r < n_rows; ++r) {
            const std::size_t n_keys = causal ? base + r + 1 : base + n_rows;
            probs.resize(cfg_.heads * n_keys);
            kernels::attention_row(q.data() + r * h, keys.data(), values.data(), n_keys, h, cfg_.heads,
                                   att.data() + r * h, probs.data());
        }
        kernels::gemm(att.data(), p(b + "attn.o").data().data(), proj.data(), n_rows, h, h, false);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = x[i] + proj[i];
        }
        for (std::size_t r = 0; r < n_rows; ++r) {
            kernels::layernorm_row(x.data() + r * h, p(b + "ln2.gain").data().data(), a.data() + r * h, h, mu, rs);
        }
        kernels::gemm(a.data(), p(b + "mlp.fc1").data().data(), mlp.data(), n_rows, h, cfg_.mlp_hidden, false);
        for (T& v : mlp) {
            v = kernels::gelu(v);
        }
        kernels::gemm(mlp.data(), p(b + "mlp.fc2").data().data(), proj.data(), n_rows, cfg_.mlp_hidden, h, false);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = x[i] + proj[i];
        }
    }
    cache.length = base + n_rows;
    for (std::size_t r = 0; r < n_rows; ++r) {
        kernels::layernorm_row(x.data() + r * h, p("final.ln.gain").data().data(), a.data() + r * h, h, mu, rs);
    }
    const std::size_t w = cfg_.head_width();
    std::vector<T> head(n_rows * w);
    kernels::gemm(a.data(), p("head.w").data().data(), head.data(), n_rows, h, w, false);
    const auto bias = p("head.b").data();
    for (std::size_t r = 0; r < n_rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) {
            head[r * w + j] = head[r * w + j] + bias[j];
        }
    }
    for (T v : head) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::non_finite, "model produced a non-finite head output");
        }
    }
    return head;
}

template <typename T>
GmmParams GivtModel<T>::to_gmm(std::span<const T> head, std::size_t positions) const
{
    return GmmParams::from_head<T>(head, positions, cfg_.d, cfg_.k, cfg_.sigma_floor);
}

template <typename T>
GmmParams GivtModel<T>::predict_causal(std::span<const double> z, std::size_t n_positions, std::size_t label) const
{
    if (cfg_.mode != GivtMode::causal || n_positions == 0 || n_positions > cfg_.tokens ||
        z.size() < (n_positions - 1) * cfg_.d) {
        throw Error(ErrorCode::invalid_argument, "predict_causal needs a causal model and a long enough prefix");
    }
    const std::size_t h = cfg_.hidden;
    std::vector<T> rows(n_positions * h);
    for (std::size_t r = 0; r < n_positions; ++r) {
        const auto prev = r == 0 ? std::span<const double>() : z.subspan((r - 1) * cfg_.d, cfg_.d);
        const auto row = causal_input_row(r, label, prev);
        std::copy(row.begin(), row.end(), rows.begin() + static_cast<std::ptrdiff_t>(r * h));
    }
    KvCache<T> cache = new_cache();
    const auto head = infer_rows(rows, n_positions, cache, true);
    return to_gmm(head, n_positions);
}

template <typename T>
GmmParams GivtModel<T>::predict_maskgit(std::span<const double> z, const MaskState& mask, std::size_t label) const
{
    if (cfg_.mode != GivtMode::maskgit) {
        throw Error(ErrorCode::invalid_argument, "predict_maskgit needs a maskgit-mode model");
    }
    const auto rows = maskgit_input_rows(z, mask, label);
    KvCache<T> cache = new_cache();
    const auto head = infer_rows(rows, cfg_.tokens + 1, cache, false);
    const std::size_t w = cfg_.head_width();
    return to_gmm(std::span<const T>(head).subspan(w), cfg_.tokens);
}

template class GivtModel<float>;
template class GivtModel<double>;

} // namespace givt
