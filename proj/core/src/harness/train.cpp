#include "givt/harness/train.hpp"

#include <algorithm>
#include <cmath>

#include "givt/error.hpp"
#include "givt/optim.hpp"

namespace givt::harness {

template <typename T>
Tensor<T> image_tensor(const LabeledImages& set, std::size_t first, std::size_t n)
{
    const std::size_t px = set.image_size * set.image_size;
    if (first + n > set.size) {
        throw Error(ErrorCode::invalid_argument, "image range out of bounds");
    }
    std::vector<T> v(n * px);
    std::copy_n(set.pixels.begin() + static_cast<std::ptrdiff_t>(first * px), n * px, v.begin());
    return Tensor<T>(Shape{n, set.image_size, set.image_size, 1}, std::move(v));
}

template Tensor<float> image_tensor<float>(const LabeledImages&, std::size_t, std::size_t);
template Tensor<double> image_tensor<double>(const LabeledImages&, std::size_t, std::size_t);

namespace {

Tensor<float> gather_images(const LabeledImages& set, const std::vector<std::size_t>& idx)
{
    const std::size_t px = set.image_size * set.image_size;
    std::vector<float> v(idx.size() * px);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(set.pixels.begin() + static_cast<std::ptrdiff_t>(idx[i] * px), px,
                    v.begin() + static_cast<std::ptrdiff_t>(i * px));
    }
    return Tensor<float>(Shape{idx.size(), set.image_size, set.image_size, 1}, std::move(v));
}

template <typename Fn>
auto guarded_step(std::size_t step, const char* what, Fn&& fn)
{
    try {
        return fn();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::non_finite) {
            throw Error(ErrorCode::non_finite,
                        std::string(what) + " diverged at step " + std::to_string(step) + ": " + e.what());
        }
        throw;
    }
}

} // namespace

Vae<float> fit_vae(const VaeConfig& vcfg, const TrainConfig& tcfg, const LabeledImages& train, std::uint64_t seed,
                   CsvWriter* log)
{
    Vae<float> vae(vcfg, seed);
    AdamConfig acfg = tcfg.adam;
    acfg.total_steps = tcfg.steps;
    Adam<float> opt(vae.params(), acfg);
    const RngKey key = RngKey(seed).child("vae_train");
    std::vector<std::size_t> idx(tcfg.batch_size);
    for (std::size_t step = 0; step < tcfg.steps; ++step) {
        Rng pick(key.child(step).child("batch"));
        for (auto& i : idx) {
            i = static_cast<std::size_t>(pick.below(train.size));
        }
        const Tensor<float> x = gather_images(train, idx);
        vae.params().zero_grad();
        const auto loss = guarded_step(step, "VAE training", [&] {
            const auto g = vae.encode(x);
            const Tensor<float> z = vae.reparameterize(g, key.child(step).child("noise"));
            auto l = vae.elbo_loss(x, g, vae.decode(z), vcfg.beta);
            backward(l.total);
            return l;
        });
        const double lr = scheduled_learning_rate(acfg, step);
        const double gnorm = opt.step();
        if (!std::isfinite(gnorm)) {
            throw Error(ErrorCode::non_finite, "VAE gradient norm is not finite at step " + std::to_string(step));
        }
        if (log && (step % tcfg.log_every == 0 || step + 1 == tcfg.steps)) {
            log->row({CsvWriter::num(step), CsvWriter::num(loss.total.item()), CsvWriter::num(loss.mse.item()),
                      CsvWriter::num(loss.kl.item()), CsvWriter::num(lr), CsvWriter::num(gnorm)});
        }
    }
    return vae;
}

VaeMetrics evaluate_vae(const Vae<float>& vae, const LabeledImages& heldout)
{
    NoGradGuard guard;
    double mse = 0.0;
    double kl = 0.0;
    constexpr std::size_t chunk = 64;
    for (std::size_t first = 0; first < heldout.size; first += chunk) {
        const std::size_t n = std::min(chunk, heldout.size - first);
        const Tensor<float> x = image_tensor<float>(heldout, first, n);
        const auto g = vae.encode(x);
        const auto l = vae.elbo_loss(x, g, vae.decode(g.mu), 0.0);
        mse += l.mse.item() * static_cast<double>(n);
        kl += l.kl.item() * static_cast<double>(n);
    }
    const double count = static_cast<double>(heldout.size);
    return {mse / count, kl / count / static_cast<double>(vae.config().tokens())};
}

PosteriorSet encode_dataset(const Vae<float>& vae, const LabeledImages& images)
{
    NoGradGuard guard;
    PosteriorSet s;
    s.size = images.size;
    s.tokens = vae.config().tokens();
    s.d = vae.config().d;
    s.labels = images.labels;
    s.mu.reserve(s.size * s.tokens * s.d);
    s.sigma.reserve(s.size * s.tokens * s.d);
    constexpr std::size_t chunk = 64;
    for (std::size_t first = 0; first < images.size; first += chunk) {
        const std::size_t n = std::min(chunk, images.size - first);
        const auto g = vae.encode(image_tensor<float>(images, first, n));
        s.mu.insert(s.mu.end(), g.mu.data().begin(), g.mu.data().end());
        s.sigma.insert(s.sigma.end(), g.sigma.data().begin(), g.sigma.data().end());
    }
    return s;
}

void PosteriorLatents::fill(std::size_t step, std::size_t batch_size, LatentBatch<float>& out)
{
    const std::size_t per = set_.tokens * set_.d;
    out.size = batch_size;
    out.z.resize(batch_size * per);
    out.labels.resize(batch_size);
    Rng pick(key_.child(step).child("index"));
    for (std::size_t b = 0; b < batch_size; ++b) {
        const auto i = static_cast<std::size_t>(pick.below(set_.size));
        Rng eps(key_.child(step).child(b));
        for (std::size_t j = 0; j < per; ++j) {
            out.z[b * per + j] =
                static_cast<float>(set_.mu[i * per + j] + set_.sigma[i * per + j] * eps.normal());
        }
        out.labels[b] = set_.labels[i];
    }
}

void ArLatents::fill(std::size_t step, std::size_t batch_size, LatentBatch<float>& out)
{
    const std::size_t per = process_.tokens * process_.d;
    out.size = batch_size;
    out.z.resize(batch_size * per);
    out.labels.assign(batch_size, 0);
    for (std::size_t b = 0; b < batch_size; ++b) {
        const auto z = process_.sample(key_.child(step).child(b));
        std::copy(z.begin(), z.end(), out.z.begin() + static_cast<std::ptrdiff_t>(b * per));
    }
}

GivtModel<float> fit_givt(const GivtConfig& gcfg, const TrainConfig& tcfg, LatentSource& train, std::uint64_t seed,
                          CsvWriter* log)
{
    GivtModel<float> model(gcfg, seed);
    AdamConfig acfg = tcfg.adam;
    acfg.total_steps = tcfg.steps;
    Adam<float> opt(model.params(), acfg);
    const RngKey key = RngKey(seed).child("givt_train");
    LatentBatch<float> batch;
    for (std::size_t step = 0; step < tcfg.steps; ++step) {
        train.fill(step, tcfg.batch_size, batch);
        batch.keys.resize(batch.size);
        for (std::size_t b = 0; b < batch.size; ++b) {
            batch.keys[b] = key.child(step).child(b);
        }
        model.params().zero_grad();
        const Tensor<float> loss = guarded_step(step, "GIVT training", [&] {
            Tensor<float> l = model.loss(batch);
            backward(l);
            return l;
        });
        const double lr = scheduled_learning_rate(acfg, step);
        const double gnorm = opt.step();
        if (!std::isfinite(gnorm)) {
            throw Error(ErrorCode::non_finite, "GIVT gradient norm is not finite at step " + std::to_string(step));
        }
        if (log && (step % tcfg.log_every == 0 || step + 1 == tcfg.steps)) {
            log->row({CsvWriter::num(step), CsvWriter::num(loss.item()), CsvWriter::num(lr), CsvWriter::num(gnorm)});
        }
    }
    return model;
}

double heldout_nll(const GivtModel<float>& model, LatentSource& heldout, std::size_t batches,
                   std::size_t batch_size, const RngKey& key)
{
    NoGradGuard guard;
    LatentBatch<float> batch;
    double total = 0.0;
    for (std::size_t i = 0; i < batches; ++i) {
        heldout.fill(i, batch_size, batch);
        batch.keys.resize(batch.size);
        for (std::size_t b = 0; b < batch.size; ++b) {
            batch.keys[b] = key.child(i).child(b);
        }
        batch.drop_labels = false;
        total += model.loss(batch).item();
    }
    return total / static_cast<double>(batches);
}

DecodeResult draw_latent(const GivtModel<float>& model, const SamplerConfig& s, std::size_t cls, const RngKey& key)
{
    const SampleOptions opts = s.options();
    const std::size_t n = model.config().tokens;
    if (s.sampler == "ancestral") {
        return sample_causal(model, ConditionLabel::of(cls), n, opts, key);
    }
    if (s.sampler == "beam") {
        return beam_search(model, ConditionLabel::of(cls), n, s.beams, s.fans, opts, key);
    }
    if (s.sampler == "maskgit") {
        return maskgit_decode(model, ConditionLabel::of(cls), s.schedule, opts, key);
    }
    throw Error(ErrorCode::invalid_argument, "unknown sampler '" + s.sampler + "'");
}

std::vector<double> decode_latent(const Vae<float>& vae, std::span<const double> z)
{
    NoGradGuard guard;
    const VaeConfig& c = vae.config();
    if (z.size() != c.tokens() * c.d) {
        throw Error(ErrorCode::shape_mismatch, "latent size does not match the VAE grid");
    }
    const Tensor<float> zt(Shape{1, c.latent_h(), c.latent_w(), c.d}, std::vector<float>(z.begin(), z.end()));
    const Tensor<float> img = vae.decode(zt);
    return {img.data().begin(), img.data().end()};
}

GradCheckResult gradient_check(const std::string& name, ParameterStore<double>& params,
                               const std::function<Tensor<double>()>& loss, double h, double floor,
                               std::size_t probes)
{
    params.zero_grad();
    backward(loss());
    GradCheckResult r;
    r.name = name;
    NoGradGuard guard;
    for (auto& [pname, t] : params) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        const std::size_t n = t.size();
        const std::size_t count = probes == 0 ? n : std::min(probes, n);
        for (std::size_t c = 0; c < count; ++c) {
            const std::size_t i = probes == 0 ? c : c * n / count;
            auto v = t.mutable_data();
            const double saved = v[i];
            v[i] = saved + h;
            const double up = loss().item();
            v[i] = saved - h;
            const double down = loss().item();
            v[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double abs_err = std::abs(numeric - analytic[i]);
            const double rel = abs_err / std::max({std::abs(numeric), std::abs(analytic[i]), floor});
            ++r.checked;
            r.max_abs_error = std::max(r.max_abs_error, abs_err);
            if (rel > r.max_rel_error) {
                r.max_rel_error = rel;
                r.worst = pname + "[" + std::to_string(i) + "]";
            }
        }
    }
    return r;
}

std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, std::size_t probes)
{
    std::vector<GradCheckResult> out;
    const RngKey key = RngKey(seed).child("gradcheck");

    VaeConfig vcfg;
    vcfg.image_size = 8;
    vcfg.d = 2;
    vcfg.f = 4;
    vcfg.widths = {3, 4};
    vcfg.beta = 0.1;
    Vae<double> vae(vcfg, seed);
    const LabeledImages imgs = ToyDataset(seed, 2, 16).generate("gradcheck", 0, 2);
    // 8x8 crops of the 16x16 toy images
    std::vector<double> px(2 * 64);
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t y = 0; y < 8; ++y) {
            for (std::size_t x = 0; x < 8; ++x) {
                px[n * 64 + y * 8 + x] = imgs.pixels[n * 256 + (y + 4) * 16 + x + 4];
            }
        }
    }
    const Tensor<double> images(Shape{2, 8, 8, 1}, px);
    out.push_back(gradient_check(
        "vae_elbo", vae.params(),
        [&] {
            const auto g = vae.encode(images);
            const Tensor<double> z = vae.reparameterize(g, key.child("vae_noise"));
            return vae.elbo_loss(images, g, vae.decode(z), vcfg.beta).total;
        },
        gradcheck_step, gradcheck_floor, probes));

    for (GivtMode mode : {GivtMode::causal, GivtMode::maskgit}) {
        GivtConfig g;
        g.layers = 2;
        g.heads = 2;
        g.hidden = 8;
        g.mlp_hidden = 16;
        g.d = 2;
        g.k = 2;
        g.tokens = 5;
        g.num_classes = 2;
        g.label_dropout = 0.5;
        g.mode = mode;
        GivtModel<double> model(g, seed);
        LatentBatch<double> batch;
        batch.size = 3;
        Rng rng(key.child("givt_latents"));
        batch.z.resize(batch.size * g.tokens * g.d);
        for (double& v : batch.z) {
            v = rng.normal();
        }
        batch.labels = {0, 1, 1};
        for (std::size_t b = 0; b < batch.size; ++b) {
            batch.keys.push_back(key.child("givt_batch").child(b));
        }
        out.push_back(gradient_check(
            "givt_" + to_string(mode), model.params(), [&] { return model.loss(batch); }, gradcheck_step,
            gradcheck_floor, probes));
    }
    return out;
}

} // namespace givt::harness
