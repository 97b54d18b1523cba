#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "givt/rng.hpp"

namespace givt {

/// Diagonal Gaussian: element-wise mean and standard deviation.
struct GaussianParams {
    std::vector<double> mu;
    std::vector<double> sigma;

    void validate() const;
};

/// Per-position, per-channel k-component scalar mixtures.
///
/// Storage is [position][channel][component] for all three arrays. `scales`
/// are standard deviations (already passed through softplus + floor) and
/// `weights` are probabilities (already softmax-normalized).
struct GmmParams {
    std::size_t positions = 0;
    std::size_t d = 0;
    std::size_t k = 0;
    std::vector<double> means;
    std::vector<double> scales;
    std::vector<double> weights;

    GmmParams() = default;
    GmmParams(std::size_t positions, std::size_t d, std::size_t k);

    std::size_t index(std::size_t pos, std::size_t ch, std::size_t comp) const noexcept
    {
        return (pos * d + ch) * k + comp;
    }
    std::size_t parameter_count_per_position() const noexcept { return 3 * d * k; }

    /// Checks extents, positive scales and per-channel weights summing to 1 (1e-6).
    void validate() const;

    /// Interprets raw head rows (means | raw scales | logits, each d*k wide).
    template <typename T>
    static GmmParams from_head(std::span<const T> head, std::size_t positions, std::size_t d, std::size_t k,
                               double sigma_floor);

    /// Copy of one position as a single-position mixture set.
    GmmParams at_position(std::size_t pos) const;

    /// Mixture-weighted mean of the component scales, averaged over all channels.
    double mean_scale() const;
};

inline constexpr double default_sigma_floor = 1e-4;

struct GuidanceConfig {
    double w = 0.0;
    std::size_t proposal_budget = 1000;
    /// Multiplier on the conditional standard deviation for the proposal.
    double proposal_scale = 2.0;
    /// Multiplier on the grid-estimated bound K.
    double bound_safety = 1.2;
    /// Candidates evaluated together; results do not depend on this value.
    std::size_t proposal_batch = 64;
    std::size_t bound_grid_points = 1024;
    /// Grid covers mean +/- this many conditional standard deviations.
    double bound_grid_halfwidth = 8.0;

    void validate() const;
};

double gmm_channel_log_prob(const GmmParams& p, std::size_t pos, std::size_t ch, double x);

/// Log-density per position, summed over channels. `z` is positions x d.
std::vector<double> gmm_log_prob(const GmmParams& p, std::span<const double> z);

/// Draws one value: component by inverse CDF over the weights (one uniform),
/// then a Gaussian draw.
double sample_channel(const GmmParams& p, std::size_t pos, std::size_t ch, Rng& rng);

/// Samples every (position, channel); stream for each is key.child(pos).child(ch).
std::vector<double> gmm_sample(const GmmParams& p, const RngKey& key);

/// Multiplies every scale by `t` (> 0).
GmmParams scale_variance(GmmParams p, double t);

double normal_cdf(double x);
double normal_quantile(double p);

/// Single-Gaussian-per-channel predictions restricted to their central
/// `quantile` mass interval [mu - a*sigma, mu + a*sigma].
struct TruncatedGaussians {
    GmmParams base;
    double quantile = 1.0;
    double half_width = 0.0;

    double lower(std::size_t pos, std::size_t ch) const;
    double upper(std::size_t pos, std::size_t ch) const;
    double sample_channel(std::size_t pos, std::size_t ch, Rng& rng) const;
    std::vector<double> sample(const RngKey& key) const;
};

/// Requires k == 1 and 0.5 < q < 1.
TruncatedGaussians truncate(const GmmParams& p, double q);

/// (1 + w) log pc(x) - w log pu(x) for one channel.
double cfg_unnormalized_log_density(const GmmParams& pc, const GmmParams& pu, double w, std::size_t pos,
                                    std::size_t ch, double x);

/// Per (position, channel) values for a full latent `z`.
std::vector<double> cfg_unnormalized_log_density(const GmmParams& pc, const GmmParams& pu, double w,
                                                 std::span<const double> z);

/// Whether p_cfg is normalizable for this channel, judged from the widest components.
bool cfg_target_proper(const GmmParams& pc, const GmmParams& pu, double w, std::size_t pos, std::size_t ch);

/// log K for the channel: bound_safety times the grid maximum of target / proposal.
double cfg_log_bound(const GmmParams& pc, const GmmParams& pu, const GuidanceConfig& cfg, std::size_t pos,
                     std::size_t ch);

struct CfgChannelSample {
    double value = 0.0;
    bool accepted = false;
    bool improper = false;
    /// Index of the accepted proposal + 1, or the full budget when none was accepted.
    std::size_t proposals_used = 0;
};

CfgChannelSample cfg_sample_channel(const GmmParams& pc, const GmmParams& pu, const GuidanceConfig& cfg,
                                    std::size_t pos, std::size_t ch, const RngKey& channel_key);

struct CfgSampleResult {
    std::vector<double> z;
    std::size_t channels = 0;
    std::size_t accepted = 0;
    std::size_t fallbacks = 0;
    std::size_t improper = 0;

    double acceptance_rate() const noexcept
    {
        return channels ? static_cast<double>(accepted) / static_cast<double>(channels) : 1.0;
    }
};

/// Density-based classifier-free guidance by rejection sampling; channel
/// streams are key.child(pos).child(ch).
CfgSampleResult cfg_rejection_sample(const GmmParams& pc, const GmmParams& pu, const GuidanceConfig& cfg,
                                     const RngKey& key);

/// sum over dims of 0.5 * (mu^2 + sigma^2 - 1 - ln sigma^2)
double kl_to_standard_normal(const GaussianParams& g);

} // namespace givt
