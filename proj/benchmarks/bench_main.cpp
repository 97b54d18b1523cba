#include <benchmark/benchmark.h>

#include <vector>

#include "givt/dist.hpp"
#include "givt/infer.hpp"
#include "givt/kernels.hpp"
#include "givt/model.hpp"
#include "givt/ops.hpp"

namespace {

using givt::Rng;
using givt::RngKey;

void BM_Gemm(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(RngKey(1));
    std::vector<float> a(n * n), b(n * n), c(n * n);
    for (auto& v : a) {
        v = static_cast<float>(rng.normal());
    }
    for (auto& v : b) {
        v = static_cast<float>(rng.normal());
    }
    for (auto _ : state) {
        givt::kernels::gemm(a.data(), b.data(), c.data(), n, n, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

void BM_AttentionForward(benchmark::State& state)
{
    const auto t = static_cast<std::size_t>(state.range(0));
    constexpr std::size_t width = 64;
    Rng rng(RngKey(2));
    const auto q = givt::Tensor<float>::randn({4, t, width}, 1.0f, rng);
    const auto k = givt::Tensor<float>::randn({4, t, width}, 1.0f, rng);
    const auto v = givt::Tensor<float>::randn({4, t, width}, 1.0f, rng);
    givt::NoGradGuard guard;
    for (auto _ : state) {
        benchmark::DoNotOptimize(givt::attention(q, k, v, 4, true));
    }
}
BENCHMARK(BM_AttentionForward)->Arg(64)->Arg(128);

givt::GmmParams random_gmm(std::size_t positions, std::size_t d, std::size_t k)
{
    Rng rng(RngKey(3));
    std::vector<double> head(positions * 3 * d * k);
    for (auto& v : head) {
        v = rng.normal();
    }
    return givt::GmmParams::from_head<double>(head, positions, d, k, givt::default_sigma_floor);
}

void BM_GmmLogProb(benchmark::State& state)
{
    const auto k = static_cast<std::size_t>(state.range(0));
    const auto p = random_gmm(64, 16, k);
    std::vector<double> z(64 * 16, 0.3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(givt::gmm_log_prob(p, z));
    }
}
BENCHMARK(BM_GmmLogProb)->Arg(1)->Arg(4)->Arg(16);

void BM_CfgRejectionSample(benchmark::State& state)
{
    givt::GmmParams pc(1, 1, 1);
    pc.means = {1.0};
    pc.scales = {1.0};
    pc.weights = {1.0};
    givt::GmmParams pu(1, 1, 1);
    pu.means = {0.0};
    pu.scales = {2.0};
    pu.weights = {1.0};
    givt::GuidanceConfig g;
    g.w = 0.5;
    std::uint64_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(givt::cfg_rejection_sample(pc, pu, g, RngKey(4).child(i++)));
    }
}
BENCHMARK(BM_CfgRejectionSample);

void BM_CausalDecode(benchmark::State& state)
{
    givt::GivtConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 64;
    cfg.mlp_hidden = 128;
    cfg.tokens = 64;
    givt::GivtModel<float> model(cfg, 5);
    givt::SampleOptions opts;
    opts.use_cache = state.range(0) != 0;
    std::uint64_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            givt::sample_causal(model, givt::ConditionLabel::of(0), cfg.tokens, opts, RngKey(6).child(i++)));
    }
}
BENCHMARK(BM_CausalDecode)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

} // namespace
BENCHMARK_MAIN();
