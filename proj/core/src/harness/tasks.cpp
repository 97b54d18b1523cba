#include "givt/harness/tasks.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>

#include "givt/error.hpp"
#include "givt/harness/checkpoint.hpp"
#include "givt/harness/stats.hpp"
#include "givt/tensor_io.hpp"

namespace givt::harness {

namespace fs = std::filesystem;

Vae<float> load_vae(const RunConfig& cfg)
{
    if (cfg.vae_checkpoint.empty()) {
        throw Error(ErrorCode::invalid_argument, "paths.vae_checkpoint is not set");
    }
    Vae<float> vae(cfg.vae, cfg.seed);
    load_checkpoint(cfg.vae_checkpoint, vae_kind, vae_identity(cfg.vae), vae.params());
    return vae;
}

GivtModel<float> load_givt(const RunConfig& cfg)
{
    if (cfg.givt_checkpoint.empty()) {
        throw Error(ErrorCode::invalid_argument, "paths.givt_checkpoint is not set");
    }
    GivtModel<float> model(cfg.givt, cfg.seed);
    load_checkpoint(cfg.givt_checkpoint, givt_kind, givt_identity(cfg.givt), model.params());
    return model;
}

LabeledImages train_images(const RunConfig& cfg)
{
    return ToyDataset(cfg.seed, cfg.data.num_classes, cfg.vae.image_size).generate("train", 0, cfg.data.train_size);
}

LabeledImages heldout_images(const RunConfig& cfg)
{
    return ToyDataset(cfg.seed, cfg.data.num_classes, cfg.vae.image_size)
        .generate("heldout", 0, cfg.data.heldout_size);
}

namespace {

std::string index_str(std::size_t i)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return buf;
}

std::vector<double> class_pixel_means(const LabeledImages& set, std::size_t classes)
{
    const std::size_t px = set.image_size * set.image_size;
    std::vector<double> sum(classes, 0.0);
    std::vector<double> count(classes, 0.0);
    for (std::size_t i = 0; i < set.size; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < px; ++j) {
            s += set.pixels[i * px + j];
        }
        sum[set.labels[i]] += s / static_cast<double>(px);
        count[set.labels[i]] += 1.0;
    }
    for (std::size_t c = 0; c < classes; ++c) {
        sum[c] = count[c] > 0 ? sum[c] / count[c] : 0.0;
    }
    return sum;
}

struct SummaryRows {
    std::vector<std::pair<std::string, double>> rows;
    void add(std::string k, double v)
    {
        std::cout << k << " = " << v << '\n';
        rows.emplace_back(std::move(k), v);
    }
    void write(const fs::path& path) const
    {
        CsvWriter w(path, summary_header);
        for (const auto& [k, v] : rows) {
            w.row({k, CsvWriter::num(v)});
        }
    }
};

PosteriorLatents posterior_source(const RunConfig& cfg, const Vae<float>& vae, const LabeledImages& images,
                                  const char* label)
{
    return PosteriorLatents(encode_dataset(vae, images), RngKey(cfg.seed).child(label));
}

} // namespace

std::vector<fs::path> emit_samples(const RunConfig& cfg, const Vae<float>& vae, const GivtModel<float>& givt,
                                   const fs::path& out_dir)
{
    fs::create_directories(out_dir);
    const std::string tag = cfg.sample.tag();
    const RngKey key = RngKey(cfg.seed).child("sample").child(tag);
    std::vector<fs::path> files;
    const fs::path diag_path = out_dir / ("diagnostics_s" + std::to_string(cfg.seed) + "_" + tag + ".csv");
    CsvWriter diag(diag_path, diagnostics_header);
    files.push_back(diag_path);
    const VaeConfig& v = cfg.vae;
    for (std::size_t cls = 0; cls < cfg.data.num_classes; ++cls) {
        for (std::size_t i = 0; i < cfg.sample.samples_per_class; ++i) {
            const DecodeResult r = draw_latent(givt, cfg.sample, cls, key.child(cls).child(i));
            const std::vector<double> pixels = decode_latent(vae, r.z);
            const std::string stem =
                "c" + std::to_string(cls) + "_s" + std::to_string(cfg.seed) + "_" + tag + "_" + index_str(i);
            write_pgm(out_dir / (stem + ".pgm"), pixels, v.image_size, v.image_size);
            save_tensor_file(out_dir / (stem + ".tnsr"),
                             Tensor<double>(Shape{v.latent_h(), v.latent_w(), v.d}, r.z));
            files.push_back(out_dir / (stem + ".pgm"));
            files.push_back(out_dir / (stem + ".tnsr"));
            for (const StepDiagnostics& s : r.steps) {
                diag.row({CsvWriter::num(i), CsvWriter::num(cls), CsvWriter::num(s.step), CsvWriter::num(s.masked),
                          CsvWriter::num(s.mean_sigma), CsvWriter::num(s.acceptance_rate),
                          CsvWriter::num(s.fallbacks), CsvWriter::num(s.improper)});
            }
        }
    }
    return files;
}

EvalReport evaluate(const RunConfig& cfg, const Vae<float>& vae, const GivtModel<float>& givt, const fs::path& out_dir)
{
    fs::create_directories(out_dir);
    EvalReport rep;
    const LabeledImages train = train_images(cfg);
    const LabeledImages held = heldout_images(cfg);
    PosteriorLatents held_src = posterior_source(cfg, vae, held, "eval_latents");
    rep.heldout_nll = heldout_nll(givt, held_src, cfg.eval_batches, cfg.givt_train.batch_size,
                                  RngKey(cfg.seed).child("eval_nll"));
    rep.train_pixel_mean = class_pixel_means(train, cfg.data.num_classes);

    const std::string tag = cfg.sample.tag();
    const RngKey key = RngKey(cfg.seed).child("eval_sample").child(tag);
    std::vector<double> sampled_latents;
    std::vector<std::size_t> counts(cfg.data.num_classes, 0);
    rep.sample_pixel_mean.assign(cfg.data.num_classes, 0.0);
    for (std::size_t cls = 0; cls < cfg.data.num_classes; ++cls) {
        for (std::size_t i = 0; i < cfg.sample.samples_per_class; ++i) {
            const DecodeResult r = draw_latent(givt, cfg.sample, cls, key.child(cls).child(i));
            const std::vector<double> px = decode_latent(vae, r.z);
            rep.sample_pixel_mean[cls] += mean(px);
            ++counts[cls];
            sampled_latents.insert(sampled_latents.end(), r.z.begin(), r.z.end());
        }
        rep.sample_pixel_mean[cls] /= static_cast<double>(std::max<std::size_t>(counts[cls], 1));
    }
    LatentBatch<float> reference;
    held_src.fill(0, held.size, reference);
    const std::vector<double> ref(reference.z.begin(), reference.z.end());
    const TestResult ks = ks_two_sample(sampled_latents, ref);
    rep.ks_statistic = ks.statistic;
    rep.ks_p_value = ks.p_value;

    CsvWriter w(out_dir / "eval.csv", eval_header);
    for (std::size_t cls = 0; cls < cfg.data.num_classes; ++cls) {
        const double t = rep.train_pixel_mean[cls];
        w.row({tag, CsvWriter::num(cls), CsvWriter::num(counts[cls]), CsvWriter::num(rep.sample_pixel_mean[cls]),
               CsvWriter::num(t), CsvWriter::num(std::abs(rep.sample_pixel_mean[cls] - t) / t),
               CsvWriter::num(ks.statistic), CsvWriter::num(ks.p_value)});
    }
    SummaryRows s;
    s.add("heldout_nll", rep.heldout_nll);
    s.add("latent_ks_statistic", ks.statistic);
    s.add("latent_ks_p_value", ks.p_value);
    s.write(out_dir / "eval_summary.csv");
    return rep;
}

namespace {

int task_train_vae(const RunConfig& cfg)
{
    fs::create_directories(cfg.out_dir);
    CsvWriter log(cfg.out_dir / "vae_metrics.csv", vae_metrics_header);
    const Vae<float> vae = fit_vae(cfg.vae, cfg.vae_train, train_images(cfg), cfg.seed, &log);
    save_checkpoint(cfg.out_dir / "vae.ckpt", vae_kind, vae_identity(cfg.vae), cfg.vae_train.steps, vae.params());
    const VaeMetrics m = evaluate_vae(vae, heldout_images(cfg));
    SummaryRows s;
    s.add("heldout_mse", m.mse);
    s.add("heldout_kl_per_token", m.kl_per_token);
    s.write(cfg.out_dir / "vae_summary.csv");
    return 0;
}

int task_train_givt(const RunConfig& cfg)
{
    fs::create_directories(cfg.out_dir);
    const Vae<float> vae = load_vae(cfg);
    PosteriorLatents train = posterior_source(cfg, vae, train_images(cfg), "givt_latents");
    CsvWriter log(cfg.out_dir / "givt_metrics.csv", givt_metrics_header);
    const GivtModel<float> model = fit_givt(cfg.givt, cfg.givt_train, train, cfg.seed, &log);
    save_checkpoint(cfg.out_dir / "givt.ckpt", givt_kind, givt_identity(cfg.givt), cfg.givt_train.steps,
                    model.params());
    PosteriorLatents held = posterior_source(cfg, vae, heldout_images(cfg), "eval_latents");
    SummaryRows s;
    s.add("heldout_nll",
          heldout_nll(model, held, cfg.eval_batches, cfg.givt_train.batch_size, RngKey(cfg.seed).child("eval_nll")));
    s.write(cfg.out_dir / "givt_summary.csv");
    return 0;
}

int task_gradcheck(const RunConfig& cfg)
{
    fs::create_directories(cfg.out_dir);
    CsvWriter w(cfg.out_dir / "gradcheck.csv", gradcheck_header);
    bool ok = true;
    for (const GradCheckResult& r : run_gradchecks(cfg.seed, cfg.gradcheck_probes)) {
        w.row({r.name, CsvWriter::num(r.checked), CsvWriter::num(r.max_rel_error), CsvWriter::num(r.max_abs_error),
               r.worst});
        std::cout << r.name << ": " << r.checked << " entries, max rel error " << r.max_rel_error << " at "
                  << r.worst << '\n';
        ok = ok && r.max_rel_error < 1e-4;
    }
    return ok ? 0 : 1;
}

int task_sweep_beta(const RunConfig& cfg)
{
    fs::create_directories(cfg.out_dir);
    const LabeledImages train = train_images(cfg);
    const LabeledImages held = heldout_images(cfg);
    CsvWriter w(cfg.out_dir / "sweep.csv", sweep_header);
    for (double beta : cfg.sweep_betas) {
        RunConfig c = cfg;
        c.vae.beta = beta;
        const fs::path dir = cfg.out_dir / ("beta_" + CsvWriter::num(beta));
        fs::create_directories(dir);
        CsvWriter vlog(dir / "vae_metrics.csv", vae_metrics_header);
        const Vae<float> vae = fit_vae(c.vae, c.vae_train, train, c.seed, &vlog);
        save_checkpoint(dir / "vae.ckpt", vae_kind, vae_identity(c.vae), c.vae_train.steps, vae.params());
        const VaeMetrics m = evaluate_vae(vae, held);
        PosteriorLatents src = posterior_source(c, vae, train, "givt_latents");
        CsvWriter glog(dir / "givt_metrics.csv", givt_metrics_header);
        const GivtModel<float> model = fit_givt(c.givt, c.givt_train, src, c.seed, &glog);
        save_checkpoint(dir / "givt.ckpt", givt_kind, givt_identity(c.givt), c.givt_train.steps, model.params());
        PosteriorLatents hsrc = posterior_source(c, vae, held, "eval_latents");
        const double nll =
            heldout_nll(model, hsrc, c.eval_batches, c.givt_train.batch_size, RngKey(c.seed).child("eval_nll"));
        w.row({CsvWriter::num(beta), CsvWriter::num(m.mse), CsvWriter::num(m.kl_per_token), CsvWriter::num(nll)});
        std::cout << "beta " << beta << ": mse " << m.mse << ", kl/token " << m.kl_per_token << ", givt nll " << nll
                  << '\n';
    }
    return 0;
}

} // namespace

int run_task(const RunConfig& cfg)
{
    if (cfg.task == "train-vae") {
        return task_train_vae(cfg);
    }
    if (cfg.task == "train-givt") {
        return task_train_givt(cfg);
    }
    if (cfg.task == "sample") {
        const auto files = emit_samples(cfg, load_vae(cfg), load_givt(cfg), cfg.out_dir / "samples");
        std::cout << "wrote " << files.size() << " files to " << (cfg.out_dir / "samples").string() << '\n';
        return 0;
    }
    if (cfg.task == "eval") {
        evaluate(cfg, load_vae(cfg), load_givt(cfg), cfg.out_dir);
        return 0;
    }
    if (cfg.task == "gradcheck") {
        return task_gradcheck(cfg);
    }
    if (cfg.task == "sweep-beta") {
        return task_sweep_beta(cfg);
    }
    throw Error(ErrorCode::invalid_argument, "unknown task '" + cfg.task + "'");
}

} // namespace givt::harness
