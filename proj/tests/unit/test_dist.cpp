#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "givt/dist.hpp"
#include "givt/error.hpp"
#include "givt/harness/stats.hpp"

namespace givt {
namespace {

constexpr double half_log_2pi = 0.918938533204672741780;

GmmParams single(double mu, double sigma, std::size_t positions = 1)
{
    GmmParams p(positions, 1, 1);
    std::fill(p.means.begin(), p.means.end(), mu);
    std::fill(p.scales.begin(), p.scales.end(), sigma);
    return p;
}

GmmParams random_gmm(Rng& rng, std::size_t positions, std::size_t d, std::size_t k)
{
    GmmParams p(positions, d, k);
    for (std::size_t i = 0; i < p.means.size(); ++i) {
        p.means[i] = 2.0 * rng.normal();
        p.scales[i] = 0.05 + 2.0 * rng.uniform();
        p.weights[i] = rng.uniform();
    }
    for (std::size_t s = 0; s < positions * d; ++s) {
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            total += p.weights[s * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) {
            p.weights[s * k + j] /= total;
        }
    }
    return p;
}

// Direct weighted-pdf summation, independent of the log-sum-exp path.
double direct_log_prob(const GmmParams& p, std::size_t pos, std::span<const double> z)
{
    double total = 0.0;
    for (std::size_t c = 0; c < p.d; ++c) {
        double density = 0.0;
        for (std::size_t j = 0; j < p.k; ++j) {
            const std::size_t i = p.index(pos, c, j);
            const double u = (z[pos * p.d + c] - p.means[i]) / p.scales[i];
            density += p.weights[i] * std::exp(-0.5 * u * u) / (p.scales[i] * std::sqrt(2.0 * std::numbers::pi));
        }
        total += std::log(density);
    }
    return total;
}

TEST(GmmLogProb, StandardNormalAtMean)
{
    GmmParams p(2, 3, 1);
    const std::vector<double> z(6, 0.0);
    for (double v : gmm_log_prob(p, z)) {
        EXPECT_NEAR(v, -half_log_2pi * 3, 1e-12);
    }
}

TEST(GmmLogProb, IdenticalComponentsCollapse)
{
    GmmParams two(1, 1, 2);
    two.means = {0.3, 0.3};
    two.scales = {1.7, 1.7};
    two.weights = {0.2, 0.8};
    const GmmParams one = single(0.3, 1.7);
    for (double x : {-2.0, 0.0, 0.3, 4.0}) {
        const std::vector<double> z{x};
        EXPECT_NEAR(gmm_log_prob(two, z)[0], gmm_log_prob(one, z)[0], 1e-14);
    }
}

TEST(GmmLogProb, MatchesDirectSummationOracle)
{
    Rng rng(RngKey(21));
    for (int trial = 0; trial < 1000; ++trial) {
        const GmmParams p = random_gmm(rng, 2, 3, 4);
        std::vector<double> z(6);
        for (double& v : z) {
            v = 2.0 * rng.normal();
        }
        const auto lp = gmm_log_prob(p, z);
        for (std::size_t pos = 0; pos < 2; ++pos) {
            EXPECT_NEAR(lp[pos], direct_log_prob(p, pos, z), 1e-10);
        }
    }
}

TEST(GmmLogProb, NonFiniteInputRejected)
{
    const GmmParams p = single(0.0, 1.0);
    const std::vector<double> z{std::nan("")};
    EXPECT_THROW(gmm_log_prob(p, z), Error);
}

TEST(GmmParams, ValidateChecksWeights)
{
    GmmParams p(1, 1, 2);
    p.weights = {0.5, 0.6};
    EXPECT_THROW(p.validate(), Error);
    p.weights = {0.4, 0.6};
    EXPECT_NO_THROW(p.validate());
    p.scales = {1.0, 0.0};
    EXPECT_THROW(p.validate(), Error);
}

TEST(GmmSample, NearDeterministicAtFloor)
{
    const GmmParams p = single(2.5, default_sigma_floor, 100);
    for (double v : gmm_sample(p, RngKey(22))) {
        EXPECT_NEAR(v, 2.5, 1e-3);
    }
}

TEST(GmmSample, LawOfLargeNumbers)
{
    const GmmParams p = single(0.0, 1.0, 100000);
    const auto z = gmm_sample(p, RngKey(23));
    EXPECT_LT(std::abs(harness::mean(z)), 0.02);
    EXPECT_NEAR(harness::stddev(z), 1.0, 0.01);
}

TEST(GmmSample, ZeroWeightComponentNeverDrawn)
{
    GmmParams a(50, 2, 2);
    GmmParams b(50, 2, 2);
    for (std::size_t s = 0; s < 100; ++s) {
        a.means[2 * s] = b.means[2 * s] = 1.0;
        a.means[2 * s + 1] = -40.0;
        b.means[2 * s + 1] = 40.0;
        a.weights[2 * s] = b.weights[2 * s] = 1.0;
        a.weights[2 * s + 1] = b.weights[2 * s + 1] = 0.0;
    }
    EXPECT_EQ(gmm_sample(a, RngKey(24)), gmm_sample(b, RngKey(24)));
}

TEST(GmmSample, StreamsAreKeyed)
{
    const GmmParams p = single(0.0, 1.0, 4);
    EXPECT_EQ(gmm_sample(p, RngKey(25)), gmm_sample(p, RngKey(25)));
    EXPECT_NE(gmm_sample(p, RngKey(25)), gmm_sample(p, RngKey(26)));
}

TEST(ScaleVariance, Behaviour)
{
    const GmmParams p = single(0.4, 1.0);
    EXPECT_EQ(scale_variance(p, 1.0).scales, p.scales);
    EXPECT_DOUBLE_EQ(scale_variance(p, 0.95).scales[0], 0.95);
    EXPECT_EQ(scale_variance(p, 0.95).means, p.means);
    EXPECT_THROW(scale_variance(p, 0.0), Error);
    EXPECT_THROW(scale_variance(p, -1.0), Error);
}

TEST(ScaleVariance, ModeIsInvariant)
{
    const GmmParams base = single(0.4, 1.3);
    for (double t : {0.3, 0.95, 2.0}) {
        const GmmParams p = scale_variance(base, t);
        const std::vector<double> at{0.4}, left{0.4 - 1e-3}, right{0.4 + 1e-3};
        EXPECT_GT(gmm_log_prob(p, at)[0], gmm_log_prob(p, left)[0]);
        EXPECT_GT(gmm_log_prob(p, at)[0], gmm_log_prob(p, right)[0]);
    }
}

// Bisection on erf for Phi^{-1}((1 + q) / 2).
double bisect_quantile(double q)
{
    double lo = 0.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::erf(mid / std::numbers::sqrt2) < q ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

TEST(Truncate, HalfWidthMatchesErfBisection)
{
    const auto t = truncate(single(0.0, 1.0), 0.8);
    EXPECT_NEAR(t.half_width, bisect_quantile(0.8), 1e-9);
    EXPECT_NEAR(t.half_width, 1.281552, 1e-6);
}

TEST(Truncate, SamplesStayInside)
{
    const auto t = truncate(single(1.0, 2.0, 5000), 0.8);
    for (double v : t.sample(RngKey(27))) {
        EXPECT_GE(v, t.lower(0, 0));
        EXPECT_LE(v, t.upper(0, 0));
    }
}

TEST(Truncate, NearOneMatchesUntruncated)
{
    const GmmParams p = single(0.0, 1.0, 20000);
    const auto a = truncate(p, 0.999999).sample(RngKey(28));
    const auto b = gmm_sample(p, RngKey(29));
    EXPECT_GT(harness::ks_two_sample(a, b).p_value, 0.01);
}

TEST(Truncate, RejectsMixturesAndBadQuantiles)
{
    try {
        truncate(GmmParams(1, 1, 2), 0.8);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unsupported);
    }
    EXPECT_THROW(truncate(single(0, 1), 0.5), Error);
    EXPECT_THROW(truncate(single(0, 1), 1.0), Error);
}

TEST(CfgDensity, NoGuidanceAndEqualModelsReduceToConditional)
{
    Rng rng(RngKey(30));
    const GmmParams pc = random_gmm(rng, 1, 1, 3);
    const GmmParams pu = random_gmm(rng, 1, 1, 3);
    for (double x : {-1.0, 0.2, 3.0}) {
        const std::vector<double> z{x};
        const double lc = gmm_log_prob(pc, z)[0];
        EXPECT_NEAR(cfg_unnormalized_log_density(pc, pu, 0.0, 0, 0, x), lc, 1e-12);
        EXPECT_NEAR(cfg_unnormalized_log_density(pc, pc, 0.7, 0, 0, x), lc, 1e-12);
    }
}

struct GridMoments {
    double mean;
    double sd;
    double log_integral;
};

GridMoments grid_moments(const GmmParams& pc, const GmmParams& pu, double w)
{
    const double lo = -20.0, hi = 20.0;
    const std::size_t n = 200001;
    const double dx = (hi - lo) / static_cast<double>(n - 1);
    double z0 = 0.0, z1 = 0.0, z2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = lo + dx * static_cast<double>(i);
        const double f = std::exp(cfg_unnormalized_log_density(pc, pu, w, 0, 0, x));
        const double wt = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        z0 += wt * f * dx;
        z1 += wt * f * x * dx;
        z2 += wt * f * x * x * dx;
    }
    const double m = z1 / z0;
    return {m, std::sqrt(z2 / z0 - m * m), std::log(z0)};
}

TEST(CfgDensity, GaussianCombinationMatchesGrid)
{
    const GmmParams pc = single(1.0, 1.0);
    const GmmParams pu = single(0.0, 2.0);
    const GridMoments g = grid_moments(pc, pu, 0.5);
    EXPECT_NEAR(g.mean, 1.090909, 1e-6);
    EXPECT_NEAR(g.sd, 0.852803, 1e-6);
    EXPECT_NEAR(1.0 / (g.sd * g.sd), 1.375, 1e-6);
    EXPECT_TRUE(std::isfinite(g.log_integral));
}

TEST(CfgDensity, GuidanceSharpensWhenUnconditionalIsWider)
{
    const GmmParams pc = single(0.5, 1.0);
    for (double su : {1.0, 1.5, 3.0}) {
        const GmmParams pu = single(-0.5, su);
        for (double w : {0.1, 0.5, 2.0}) {
            EXPECT_TRUE(cfg_target_proper(pc, pu, w, 0, 0));
            EXPECT_LE(grid_moments(pc, pu, w).sd, 1.0 + 1e-9);
        }
    }
}

TEST(CfgSampler, MatchesGridNormalizedTarget)
{
    const std::size_t n = 100000;
    const GmmParams pc = single(1.0, 1.0, n);
    const GmmParams pu = single(0.0, 2.0, n);
    GuidanceConfig g;
    g.w = 0.5;
    const CfgSampleResult r = cfg_rejection_sample(pc, pu, g, RngKey(31));
    EXPECT_NEAR(harness::mean(r.z), 1.090909, 0.01 * 1.090909);
    EXPECT_NEAR(harness::stddev(r.z), 0.852803, 0.02 * 0.852803);
    EXPECT_LT(static_cast<double>(r.fallbacks) / static_cast<double>(n), 0.001);
    EXPECT_EQ(r.improper, 0u);
    const double mu = 1.0 / 1.375 * 1.5, sd = std::sqrt(1.0 / 1.375);
    EXPECT_GT(harness::ks_one_sample(r.z, [&](double x) { return normal_cdf((x - mu) / sd); }).p_value, 0.01);
}

TEST(CfgSampler, ZeroGuidanceMatchesConditional)
{
    const std::size_t n = 100000;
    const GmmParams pc = single(-0.3, 1.4, n);
    const GmmParams pu = single(2.0, 3.0, n);
    GuidanceConfig g;
    g.w = 0.0;
    const auto guided = cfg_rejection_sample(pc, pu, g, RngKey(32)).z;
    const auto plain = gmm_sample(pc, RngKey(33));
    EXPECT_GT(harness::ks_two_sample(guided, plain).p_value, 0.01);
}

TEST(CfgSampler, AcceptanceRateHighWhenUnconditionalIsWider)
{
    const std::size_t n = 2000;
    GuidanceConfig g;
    for (double w : {0.2, 0.5, 1.0}) {
        for (double su : {1.0, 2.0}) {
            g.w = w;
            const auto r = cfg_rejection_sample(single(0.5, 1.0, n), single(0.0, su, n), g, RngKey(34));
            EXPECT_GT(r.acceptance_rate(), 0.999) << "w=" << w << " su=" << su;
        }
    }
}

TEST(CfgSampler, ImproperTargetFallsBack)
{
    GuidanceConfig g;
    g.w = 2.0; // 3/1 - 2/0.25 < 0
    const auto r = cfg_rejection_sample(single(0.0, 1.0, 10), single(0.0, 0.5, 10), g, RngKey(35));
    EXPECT_EQ(r.improper, 10u);
    EXPECT_EQ(r.accepted, 0u);
    for (double v : r.z) {
        EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(CfgSampler, InvariantToProposalBatching)
{
    const GmmParams pc = single(1.0, 1.0, 300);
    const GmmParams pu = single(0.0, 2.0, 300);
    GuidanceConfig g;
    g.w = 0.5;
    g.proposal_batch = 1;
    const auto a = cfg_rejection_sample(pc, pu, g, RngKey(36)).z;
    g.proposal_batch = 7;
    const auto b = cfg_rejection_sample(pc, pu, g, RngKey(36)).z;
    g.proposal_batch = 1000;
    const auto c = cfg_rejection_sample(pc, pu, g, RngKey(36)).z;
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
}

TEST(CfgSampler, MixtureConditionalStillSamples)
{
    Rng rng(RngKey(37));
    const GmmParams pc = random_gmm(rng, 200, 2, 3);
    GmmParams pu = pc;
    for (double& s : pu.scales) {
        s *= 1.5;
    }
    GuidanceConfig g;
    g.w = 0.3;
    const auto r = cfg_rejection_sample(pc, pu, g, RngKey(38));
    EXPECT_EQ(r.channels, 400u);
    EXPECT_GT(r.acceptance_rate(), 0.99);
}

TEST(Kl, ClosedFormValues)
{
    EXPECT_NEAR(kl_to_standard_normal({{0.0}, {1.0}}), 0.0, 1e-9);
    EXPECT_NEAR(kl_to_standard_normal({{1.0}, {1.0}}), 0.5, 1e-9);
    EXPECT_NEAR(kl_to_standard_normal({{0.0}, {2.0}}), 0.5 * (3.0 - std::log(4.0)), 1e-9);
    EXPECT_NEAR(kl_to_standard_normal({{0.0}, {2.0}}), 0.806853, 1e-6);
}

TEST(Kl, NonNegativeOnRandomInputs)
{
    Rng rng(RngKey(39));
    for (int i = 0; i < 1000; ++i) {
        GaussianParams g{{rng.normal()}, {0.01 + 3.0 * rng.uniform()}};
        EXPECT_GE(kl_to_standard_normal(g), 0.0);
    }
}

TEST(Rng, UniformOpenIntervalAndDeterminism)
{
    Rng a(RngKey(40)), b(RngKey(40));
    for (int i = 0; i < 10000; ++i) {
        const double u = a.uniform();
        EXPECT_GT(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_EQ(u, b.uniform());
    }
    EXPECT_NE(RngKey(1).child(2), RngKey(1).child(3));
    EXPECT_EQ(RngKey(1).child("x").child(2), RngKey(1).child("x").child(2));
}

} // namespace
} // namespace givt
