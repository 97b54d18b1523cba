#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "givt/harness/config.hpp"
#include "givt/harness/train.hpp"

namespace givt::harness {

inline const std::vector<std::string> vae_metrics_header{"step", "loss", "mse", "kl", "lr", "grad_norm"};
inline const std::vector<std::string> givt_metrics_header{"step", "nll", "lr", "grad_norm"};
inline const std::vector<std::string> diagnostics_header{"sample", "class", "step", "masked", "mean_sigma",
                                                         "acceptance_rate", "fallbacks", "improper"};
inline const std::vector<std::string> eval_header{"sampler", "class", "samples", "sample_pixel_mean",
                                                  "train_pixel_mean", "relative_error", "ks_statistic",
                                                  "ks_p_value"};
inline const std::vector<std::string> summary_header{"metric", "value"};
inline const std::vector<std::string> gradcheck_header{"model", "checked", "max_rel_error", "max_abs_error",
                                                       "worst"};
inline const std::vector<std::string> sweep_header{"beta", "recon_mse", "kl_per_token", "givt_nll"};

/// Checkpoint kind strings.
inline constexpr const char* vae_kind = "vae";
inline constexpr const char* givt_kind = "givt";

Vae<float> load_vae(const RunConfig& cfg);
GivtModel<float> load_givt(const RunConfig& cfg);

/// Training and held-out image sets for the config's data section.
LabeledImages train_images(const RunConfig& cfg);
LabeledImages heldout_images(const RunConfig& cfg);

/// Writes samples_per_class PGM images and latent dumps per class plus a
/// diagnostics CSV; returns every file written. Names look like
/// c<class>_s<seed>_<sampler tag>_<index>.{pgm,tnsr}.
std::vector<std::filesystem::path> emit_samples(const RunConfig& cfg, const Vae<float>& vae,
                                                const GivtModel<float>& givt, const std::filesystem::path& out_dir);

struct EvalReport {
    double heldout_nll = 0.0;
    /// Per class: decoded-sample and training pixel means.
    std::vector<double> sample_pixel_mean;
    std::vector<double> train_pixel_mean;
    double ks_statistic = 0.0;
    double ks_p_value = 1.0;
};

/// Read-only evaluation; writes eval.csv and eval_summary.csv into out_dir.
EvalReport evaluate(const RunConfig& cfg, const Vae<float>& vae, const GivtModel<float>& givt,
                    const std::filesystem::path& out_dir);

/// Runs cfg.task; returns a process exit code.
int run_task(const RunConfig& cfg);

} // namespace givt::harness
