#include "givt/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "givt/error.hpp"
#include "givt/kernels.hpp"

namespace givt {

namespace {

const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);

double normal_log_pdf(double x, double mu, double sigma)
{
    const double z = (x - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - half_log_2pi;
}

double log_sum_exp(std::span<const double> a)
{
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : a) {
        mx = std::max(mx, v);
    }
    if (!std::isfinite(mx)) {
        return mx;
    }
    double s = 0.0;
    for (double v : a) {
        s += std::exp(v - mx);
    }
    return mx + std::log(s);
}

// Mixture log-density with every component scale multiplied by `scale_mult`.
double mixture_log_pdf(const GmmParams& p, std::size_t pos, std::size_t ch, double x, double scale_mult)
{
    double terms[64];
    std::vector<double> heap;
    double* a = terms;
    if (p.k > 64) {
        heap.resize(p.k);
        a = heap.data();
    }
    for (std::size_t j = 0; j < p.k; ++j) {
        const std::size_t i = p.index(pos, ch, j);
        const double w = p.weights[i];
        a[j] = w > 0.0 ? std::log(w) + normal_log_pdf(x, p.means[i], p.scales[i] * scale_mult)
                       : -std::numeric_limits<double>::infinity();
    }
    return log_sum_exp(std::span<const double>(a, p.k));
}

double mixture_draw(const GmmParams& p, std::size_t pos, std::size_t ch, Rng& rng, double scale_mult)
{
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t chosen = p.k - 1;
    for (std::size_t j = 0; j < p.k; ++j) {
        cum += p.weights[p.index(pos, ch, j)];
        if (u < cum) {
            chosen = j;
            break;
        }
    }
    // Skip trailing zero-weight components reached only through rounding.
    while (chosen > 0 && p.weights[p.index(pos, ch, chosen)] <= 0.0) {
        --chosen;
    }
    const std::size_t i = p.index(pos, ch, chosen);
    return p.means[i] + p.scales[i] * scale_mult * rng.normal();
}

double widest_scale(const GmmParams& p, std::size_t pos, std::size_t ch)
{
    double s = 0.0;
    for (std::size_t j = 0; j < p.k; ++j) {
        const std::size_t i = p.index(pos, ch, j);
        if (p.weights[i] > 0.0) {
            s = std::max(s, p.scales[i]);
        }
    }
    return s;
}

void check_same_layout(const GmmParams& a, const GmmParams& b)
{
    if (a.positions != b.positions || a.d != b.d || a.k != b.k) {
        throw Error(ErrorCode::shape_mismatch, "conditional and unconditional mixtures differ in shape");
    }
}

} // namespace

void GaussianParams::validate() const
{
    if (mu.size() != sigma.size()) {
        throw Error(ErrorCode::shape_mismatch, "mu and sigma lengths differ");
    }
    for (double s : sigma) {
        if (!(s > 0.0)) {
            throw Error(ErrorCode::domain, "sigma must be strictly positive");
        }
    }
}

GmmParams::GmmParams(std::size_t positions_, std::size_t d_, std::size_t k_)
    : positions(positions_), d(d_), k(k_), means(positions_ * d_ * k_, 0.0), scales(positions_ * d_ * k_, 1.0),
      weights(positions_ * d_ * k_, 1.0 / static_cast<double>(k_ ? k_ : 1))
{
}

void GmmParams::validate() const
{
    const std::size_t n = positions * d * k;
    if (k == 0 || d == 0 || means.size() != n || scales.size() != n || weights.size() != n) {
        throw Error(ErrorCode::shape_mismatch, "gmm parameter arrays do not match positions x d x k");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(means[i]) || !(scales[i] > 0.0) || !std::isfinite(scales[i]) || weights[i] < 0.0) {
            throw Error(ErrorCode::domain, "invalid gmm parameter at flat index " + std::to_string(i));
        }
    }
    for (std::size_t pc = 0; pc < positions * d; ++pc) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            s += weights[pc * k + j];
        }
        if (std::abs(s - 1.0) > 1e-6) {
            throw Error(ErrorCode::domain, "gmm weights do not sum to 1");
        }
    }
}

template <typename T>
GmmParams GmmParams::from_head(std::span<const T> head, std::size_t positions, std::size_t d, std::size_t k,
                               double sigma_floor)
{
    const std::size_t width = 3 * d * k;
    if (head.size() != positions * width) {
        throw Error(ErrorCode::shape_mismatch, "head output size does not match positions x 3dk");
    }
    GmmParams p(positions, d, k);
    for (std::size_t pos = 0; pos < positions; ++pos) {
        const T* row = head.data() + pos * width;
        for (std::size_t ch = 0; ch < d; ++ch) {
            double lmax = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                lmax = std::max(lmax, static_cast<double>(row[2 * d * k + ch * k + j]));
            }
            double z = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                z += std::exp(static_cast<double>(row[2 * d * k + ch * k + j]) - lmax);
            }
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t i = p.index(pos, ch, j);
                p.means[i] = static_cast<double>(row[ch * k + j]);
                p.scales[i] = kernels::softplus(static_cast<double>(row[d * k + ch * k + j])) + sigma_floor;
                p.weights[i] = std::exp(static_cast<double>(row[2 * d * k + ch * k + j]) - lmax) / z;
            }
        }
    }
    return p;
}

template GmmParams GmmParams::from_head<float>(std::span<const float>, std::size_t, std::size_t, std::size_t, double);
template GmmParams GmmParams::from_head<double>(std::span<const double>, std::size_t, std::size_t, std::size_t,
                                                double);

GmmParams GmmParams::at_position(std::size_t pos) const
{
    GmmParams p(1, d, k);
    const std::size_t off = pos * d * k;
    std::copy_n(means.begin() + static_cast<std::ptrdiff_t>(off), d * k, p.means.begin());
    std::copy_n(scales.begin() + static_cast<std::ptrdiff_t>(off), d * k, p.scales.begin());
    std::copy_n(weights.begin() + static_cast<std::ptrdiff_t>(off), d * k, p.weights.begin());
    return p;
}

double GmmParams::mean_scale() const
{
    if (positions * d == 0) {
        return 0.0;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < scales.size(); ++i) {
        s += weights[i] * scales[i];
    }
    return s / static_cast<double>(positions * d);
}

void GuidanceConfig::validate() const
{
    if (proposal_budget < 1) {
        throw Error(ErrorCode::invalid_argument, "proposal_budget must be >= 1");
    }
    if (!(proposal_scale > 0.0) || !(bound_safety >= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "proposal_scale must be > 0 and bound_safety >= 1");
    }
    if (!(w >= 0.0)) {
        throw Error(ErrorCode::invalid_argument, "guidance weight must be >= 0");
    }
    if (proposal_batch < 1 || bound_grid_points < 2 || !(bound_grid_halfwidth > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "invalid proposal batch or bound grid");
    }
}

double gmm_channel_log_prob(const GmmParams& p, std::size_t pos, std::size_t ch, double x)
{
    return mixture_log_pdf(p, pos, ch, x, 1.0);
}

std::vector<double> gmm_log_prob(const GmmParams& p, std::span<const double> z)
{
    if (z.size() != p.positions * p.d) {
        throw Error(ErrorCode::shape_mismatch, "latent length does not match gmm positions x d");
    }
    std::vector<double> out(p.positions, 0.0);
    for (std::size_t pos = 0; pos < p.positions; ++pos) {
        for (std::size_t ch = 0; ch < p.d; ++ch) {
            const double x = z[pos * p.d + ch];
            if (!std::isfinite(x)) {
                throw Error(ErrorCode::non_finite, "latent value is not finite");
            }
            out[pos] += mixture_log_pdf(p, pos, ch, x, 1.0);
        }
        if (!std::isfinite(out[pos])) {
            throw Error(ErrorCode::non_finite, "log-density underflowed at position " + std::to_string(pos));
        }
    }
    return out;
}

double sample_channel(const GmmParams& p, std::size_t pos, std::size_t ch, Rng& rng)
{
    return mixture_draw(p, pos, ch, rng, 1.0);
}

std::vector<double> gmm_sample(const GmmParams& p, const RngKey& key)
{
    std::vector<double> z(p.positions * p.d);
    for (std::size_t pos = 0; pos < p.positions; ++pos) {
        const RngKey pk = key.child(pos);
        for (std::size_t ch = 0; ch < p.d; ++ch) {
            Rng rng(pk.child(ch));
            z[pos * p.d + ch] = mixture_draw(p, pos, ch, rng, 1.0);
        }
    }
    return z;
}

GmmParams scale_variance(GmmParams p, double t)
{
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw Error(ErrorCode::invalid_argument, "variance-scaling temperature must be > 0");
    }
    for (double& s : p.scales) {
        s *= t;
    }
    return p;
}

double normal_cdf(double x)
{
    return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCode::domain, "normal quantile requires 0 < p < 1");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

TruncatedGaussians truncate(const GmmParams& p, double q)
{
    if (p.k != 1) {
        throw Error(ErrorCode::unsupported, "truncation is defined for a single Gaussian per channel (k = 1)");
    }
    if (!(q > 0.5 && q < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "truncation quantile must satisfy 0.5 < q < 1");
    }
    TruncatedGaussians t;
    t.base = p;
    t.quantile = q;
    t.half_width = normal_quantile(0.5 * (1.0 + q));
    return t;
}

double TruncatedGaussians::lower(std::size_t pos, std::size_t ch) const
{
    const std::size_t i = base.index(pos, ch, 0);
    return base.means[i] - half_width * base.scales[i];
}

double TruncatedGaussians::upper(std::size_t pos, std::size_t ch) const
{
    const std::size_t i = base.index(pos, ch, 0);
    return base.means[i] + half_width * base.scales[i];
}

double TruncatedGaussians::sample_channel(std::size_t pos, std::size_t ch, Rng& rng) const
{
    // Inverse CDF restricted to [Phi(-a), Phi(a)].
    const double lo = normal_cdf(-half_width);
    const double hi = normal_cdf(half_width);
    const double u = lo + rng.uniform() * (hi - lo);
    const double zq = std::clamp(normal_quantile(u), -half_width, half_width);
    const std::size_t i = base.index(pos, ch, 0);
    return base.means[i] + base.scales[i] * zq;
}

std::vector<double> TruncatedGaussians::sample(const RngKey& key) const
{
    std::vector<double> z(base.positions * base.d);
    for (std::size_t pos = 0; pos < base.positions; ++pos) {
        for (std::size_t ch = 0; ch < base.d; ++ch) {
            Rng rng(key.child(pos).child(ch));
            z[pos * base.d + ch] = sample_channel(pos, ch, rng);
        }
    }
    return z;
}

double cfg_unnormalized_log_density(const GmmParams& pc, const GmmParams& pu, double w, std::size_t pos,
                                    std::size_t ch, double x)
{
    return (1.0 + w) * mixture_log_pdf(pc, pos, ch, x, 1.0) - w * mixture_log_pdf(pu, pos, ch, x, 1.0);
}

std::vector<double> cfg_unnormalized_log_density(const GmmParams& pc, const GmmParams& pu, double w,
                                                 std::span<const double> z)
{
    check_same_layout(pc, pu);
    if (z.size() != pc.positions * pc.d) {
        throw Error(ErrorCode::shape_mismatch, "latent length does not match gmm positions x d");
    }
    std::vector<double> out(z.size());
    for (std::size_t pos = 0; pos < pc.positions; ++pos) {
        for (std::size_t ch = 0; ch < pc.d; ++ch) {
            out[pos * pc.d + ch] = cfg_unnormalized_log_density(pc, pu, w, pos, ch, z[pos * pc.d + ch]);
        }
    }
    return out;
}

bool cfg_target_proper(const GmmParams& pc, const GmmParams& pu, double w, std::size_t pos, std::size_t ch)
{
    const double sc = widest_scale(pc, pos, ch);
    const double su = widest_scale(pu, pos, ch);
    return (1.0 + w) / (sc * sc) - w / (su * su) > 0.0;
}

double cfg_log_bound(const GmmParams& pc, const GmmParams& pu, const GuidanceConfig& cfg, std::size_t pos,
                     std::size_t ch)
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pc.k; ++j) {
        const std::size_t i = pc.index(pos, ch, j);
        lo = std::min(lo, pc.means[i] - cfg.bound_grid_halfwidth * pc.scales[i]);
        hi = std::max(hi, pc.means[i] + cfg.bound_grid_halfwidth * pc.scales[i]);
    }
    double best = -std::numeric_limits<double>::infinity();
    const std::size_t n = cfg.bound_grid_points;
    for (std::size_t g = 0; g < n; ++g) {
        const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(n - 1);
        const double log_ratio =
            cfg_unnormalized_log_density(pc, pu, cfg.w, pos, ch, x) - mixture_log_pdf(pc, pos, ch, x, cfg.proposal_scale);
        best = std::max(best, log_ratio);
    }
    return std::log(cfg.bound_safety) + best;
}

CfgChannelSample cfg_sample_channel(const GmmParams& pc, const GmmParams& pu, const GuidanceConfig& cfg,
                                    std::size_t pos, std::size_t ch, const RngKey& channel_key)
{
    CfgChannelSample out;
    if (!cfg_target_proper(pc, pu, cfg.w, pos, ch)) {
        Rng rng(channel_key.child("fallback"));
        out.value = mixture_draw(pc, pos, ch, rng, 1.0);
        out.improper = true;
        out.proposals_used = 0;
        return out;
    }
    const double log_k = cfg_log_bound(pc, pu, cfg, pos, ch);
    const std::size_t batch = cfg.proposal_batch;
    std::vector<double> candidates(batch);
    std::vector<char> accepted(batch);
    for (std::size_t start = 0; start < cfg.proposal_budget; start += batch) {
        const std::size_t end = std::min(cfg.proposal_budget, start + batch);
        // Each candidate owns its stream, so the first accepted index is the
        // same whatever the batch size.
        for (std::size_t j = start; j < end; ++j) {
            Rng rng(channel_key.child(j));
            const double x = mixture_draw(pc, pos, ch, rng, cfg.proposal_scale);
            const double log_u = std::log(rng.uniform());
            const double log_q = mixture_log_pdf(pc, pos, ch, x, cfg.proposal_scale);
            const double log_f = cfg_unnormalized_log_density(pc, pu, cfg.w, pos, ch, x);
            candidates[j - start] = x;
            accepted[j - start] = log_u + log_k + log_q < log_f;
        }
        for (std::size_t j = start; j < end; ++j) {
            if (accepted[j - start]) {
                out.value = candidates[j - start];
                out.accepted = true;
                out.proposals_used = j + 1;
                return out;
            }
        }
    }
    Rng rng(channel_key.child("fallback"));
    out.value = mixture_draw(pc, pos, ch, rng, 1.0);
    out.proposals_used = cfg.proposal_budget;
    return out;
}

CfgSampleResult cfg_rejection_sample(const GmmParams& pc, const GmmParams& pu, const GuidanceConfig& cfg,
                                     const RngKey& key)
{
    cfg.validate();
    check_same_layout(pc, pu);
    CfgSampleResult res;
    res.z.resize(pc.positions * pc.d);
    for (std::size_t pos = 0; pos < pc.positions; ++pos) {
        const RngKey pk = key.child(pos);
        for (std::size_t ch = 0; ch < pc.d; ++ch) {
            const CfgChannelSample s = cfg_sample_channel(pc, pu, cfg, pos, ch, pk.child(ch));
            res.z[pos * pc.d + ch] = s.value;
            ++res.channels;
            if (s.improper) {
                ++res.improper;
            } else if (s.accepted) {
                ++res.accepted;
            } else {
                ++res.fallbacks;
            }
        }
    }
    return res;
}

double kl_to_standard_normal(const GaussianParams& g)
{
    g.validate();
    double kl = 0.0;
    for (std::size_t i = 0; i < g.mu.size(); ++i) {
        const double s2 = g.sigma[i] * g.sigma[i];
        kl += 0.5 * (g.mu[i] * g.mu[i] + s2 - 1.0 - std::log(s2));
    }
    return kl;
}

} // namespace givt
