#include <gtest/gtest.h>

#include <cmath>

#include "givt/dist.hpp"
#include "givt/error.hpp"
#include "givt/harness/data.hpp"
#include "givt/harness/stats.hpp"
#include "givt/harness/train.hpp"
#include "givt/ops.hpp"
#include "givt/vae.hpp"

namespace givt {
namespace {

using TD = Tensor<double>;

TD toy_images(std::size_t n, std::size_t size = 32)
{
    const auto set = harness::ToyDataset(5, 4, size).generate("train", 0, n);
    return harness::image_tensor<double>(set, 0, n);
}

TEST(Vae, EncodeShapesAndPositiveScales)
{
    Vae<double> vae(VaeConfig{}, 1);
    const auto g = vae.encode(toy_images(2));
    EXPECT_EQ(g.mu.shape(), (Shape{2, 8, 8, 4}));
    EXPECT_EQ(g.sigma.shape(), (Shape{2, 8, 8, 4}));
    for (double s : g.sigma.data()) {
        EXPECT_GT(s, 0.0);
    }
}

TEST(Vae, EncodeIsDeterministic)
{
    Vae<double> vae(VaeConfig{}, 1);
    const TD x = toy_images(1);
    const auto a = vae.encode(x);
    const auto b = vae.encode(x);
    EXPECT_TRUE(std::equal(a.mu.data().begin(), a.mu.data().end(), b.mu.data().begin()));
    EXPECT_TRUE(std::equal(a.sigma.data().begin(), a.sigma.data().end(), b.sigma.data().begin()));
}

TEST(Vae, WrongImageShapeRejected)
{
    Vae<double> vae(VaeConfig{}, 1);
    EXPECT_THROW(vae.encode(TD::zeros({1, 16, 16, 1})), Error);
    EXPECT_THROW(vae.decode(TD::zeros({1, 4, 4, 4})), Error);
}

TEST(Vae, ConfigValidation)
{
    VaeConfig c;
    c.f = 3;
    EXPECT_THROW(c.validate(), Error);
    c = VaeConfig{};
    c.widths = {8};
    EXPECT_THROW(c.validate(), Error);
    c = VaeConfig{};
    c.beta = -1.0;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Reparameterize, FloorScaleReturnsMean)
{
    Vae<double> vae(VaeConfig{}, 1);
    Rng rng(RngKey(2));
    Vae<double>::Posterior g{TD::randn({3, 8, 8, 4}, 1.0, rng), TD::full({3, 8, 8, 4}, default_sigma_floor)};
    const TD z = vae.reparameterize(g, RngKey(3));
    for (std::size_t i = 0; i < z.size(); ++i) {
        EXPECT_NEAR(z.data()[i], g.mu.data()[i], 1e-3);
    }
}

TEST(Reparameterize, GradientOfMeanIsUniform)
{
    Vae<double> vae(VaeConfig{}, 1);
    TD mu = TD::zeros({2, 8, 8, 4}, true);
    TD sigma = TD::full({2, 8, 8, 4}, 0.5, true);
    backward(mean(vae.reparameterize({mu, sigma}, RngKey(4))));
    for (double gval : mu.grad()) {
        EXPECT_DOUBLE_EQ(gval, 1.0 / 512.0);
    }
    EXPECT_TRUE(sigma.has_grad());
}

TEST(Reparameterize, MomentsMatch)
{
    Vae<double> vae(VaeConfig{}, 1);
    const std::size_t n = 100000;
    const Vae<double>::Posterior g{TD::full({n, 1, 1, 1}, 3.0), TD::full({n, 1, 1, 1}, 0.7)};
    const TD z = vae.reparameterize(g, RngKey(5));
    const std::vector<double> v(z.data().begin(), z.data().end());
    EXPECT_NEAR(harness::mean(v), 3.0, 0.03);
    EXPECT_NEAR(harness::stddev(v), 0.7, 0.007);
}

TEST(Decode, ShapeAndRange)
{
    Vae<double> vae(VaeConfig{}, 1);
    Rng rng(RngKey(6));
    const TD img = vae.decode(TD::randn({2, 8, 8, 4}, 1.0, rng));
    EXPECT_EQ(img.shape(), (Shape{2, 32, 32, 1}));
    for (double v : img.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Elbo, BetaZeroIsReconstructionOnly)
{
    Vae<double> vae(VaeConfig{}, 1);
    const TD x = toy_images(2);
    const auto g = vae.encode(x);
    const auto l = vae.elbo_loss(x, g, vae.decode(g.mu), 0.0);
    EXPECT_DOUBLE_EQ(l.total.item(), l.mse.item());
    EXPECT_GT(l.kl.item(), 0.0);
}

TEST(Elbo, PerfectReconstructionAtPriorIsZero)
{
    Vae<double> vae(VaeConfig{}, 1);
    const TD x = toy_images(2);
    const Vae<double>::Posterior g{TD::zeros({2, 8, 8, 4}), TD::full({2, 8, 8, 4}, 1.0)};
    EXPECT_NEAR(vae.elbo_loss(x, g, x, 0.5).total.item(), 0.0, 1e-15);
}

TEST(Elbo, KlMatchesClosedFormOnEncoderOutputs)
{
    Vae<double> vae(VaeConfig{}, 7);
    const TD x = toy_images(3);
    const auto g = vae.encode(x);
    GaussianParams gp{{g.mu.data().begin(), g.mu.data().end()}, {g.sigma.data().begin(), g.sigma.data().end()}};
    const double closed = kl_to_standard_normal(gp);
    EXPECT_GE(closed, 0.0);
    EXPECT_NEAR(vae.elbo_loss(x, g, vae.decode(g.mu), 1.0).kl.item(), closed / 3.0, 1e-9 * closed);
}

TEST(Elbo, GradientMatchesFiniteDifferences)
{
    VaeConfig c;
    c.image_size = 8;
    c.d = 2;
    c.widths = {2, 3};
    c.beta = 0.3;
    Vae<double> vae(c, 8);
    const auto set = harness::ToyDataset(9, 2, 16).generate("train", 0, 2);
    std::vector<double> px(128);
    for (std::size_t i = 0; i < 128; ++i) {
        px[i] = set.pixels[(i / 64) * 256 + ((i % 64) / 8) * 16 + i % 8];
    }
    const TD x(Shape{2, 8, 8, 1}, px);
    const auto r = harness::gradient_check(
        "vae", vae.params(),
        [&] {
            const auto g = vae.encode(x);
            return vae.elbo_loss(x, g, vae.decode(vae.reparameterize(g, RngKey(10))), c.beta).total;
        },
        harness::gradcheck_step, harness::gradcheck_floor);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
    EXPECT_EQ(r.checked, vae.params().scalar_count());
}

} // namespace
} // namespace givt
