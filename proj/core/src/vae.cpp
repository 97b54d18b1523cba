#include "givt/vae.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "givt/ops.hpp"

namespace givt {

std::size_t VaeConfig::stages() const
{
    return f <= 1 ? 0 : static_cast<std::size_t>(std::countr_zero(f));
}

void VaeConfig::validate() const
{
    if (f == 0 || !std::has_single_bit(f)) {
        throw Error(ErrorCode::invalid_argument, "vae downsample factor must be a power of two");
    }
    if (image_size % f != 0) {
        throw Error(ErrorCode::invalid_argument, "image size must be divisible by the downsample factor");
    }
    if (widths.size() != stages() || stages() == 0) {
        throw Error(ErrorCode::invalid_argument, "vae needs one width per downsample stage (and at least one stage)");
    }
    if (d < 1 || image_channels < 1) {
        throw Error(ErrorCode::invalid_argument, "vae latent and image channels must be >= 1");
    }
    if (!(beta >= 0.0)) {
        throw Error(ErrorCode::invalid_argument, "beta must be >= 0");
    }
    if (!(sigma_floor > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "sigma floor must be > 0");
    }
}

template <typename T>
Vae<T>::Vae(VaeConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg))
{
    cfg_.validate();
    Rng rng(RngKey(seed).child("vae_init"));
    auto add_conv = [&](const std::string& name, std::size_t kernel, std::size_t in, std::size_t out) {
        const T stddev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(kernel * kernel * in)));
        params_.add(name + ".w", Tensor<T>::randn({kernel, kernel, in, out}, stddev, rng));
        params_.add(name + ".b", Tensor<T>::zeros({out}));
    };
    const std::size_t s = cfg_.stages();
    std::size_t in = cfg_.image_channels;
    for (std::size_t i = 0; i < s; ++i) {
        add_conv("enc.conv" + std::to_string(i), 3, in, cfg_.widths[i]);
        in = cfg_.widths[i];
    }
    add_conv("enc.out", 1, in, 2 * cfg_.d);
    add_conv("dec.in", 3, cfg_.d, cfg_.widths[s - 1]);
    for (std::size_t i = s; i-- > 0;) {
        add_conv("dec.conv" + std::to_string(i), 3, cfg_.widths[i], cfg_.widths[i > 0 ? i - 1 : 0]);
    }
    add_conv("dec.out", 3, cfg_.widths[0], cfg_.image_channels);
}

template <typename T>
Tensor<T> Vae<T>::conv(const Tensor<T>& x, const std::string& name, std::size_t stride, std::size_t pad) const
{
    return conv2d(x, params_.at(name + ".w"), params_.at(name + ".b"), stride, pad);
}

template <typename T>
typename Vae<T>::Posterior Vae<T>::encode(const Tensor<T>& images) const
{
    const Shape& s = images.shape();
    if (s.size() != 4 || s[1] != cfg_.image_size || s[2] != cfg_.image_size || s[3] != cfg_.image_channels) {
        throw Error(ErrorCode::shape_mismatch, "encode expects [n, " + std::to_string(cfg_.image_size) + ", " +
                                                   std::to_string(cfg_.image_size) + ", " +
                                                   std::to_string(cfg_.image_channels) + "], got " + shape_str(s));
    }
    Tensor<T> h = images;
    for (std::size_t i = 0; i < cfg_.stages(); ++i) {
        h = gelu(conv(h, "enc.conv" + std::to_string(i), 2, 1));
    }
    const Tensor<T> out = conv(h, "enc.out", 1, 0);
    Posterior g;
    g.mu = slice(out, 3, 0, cfg_.d);
    g.sigma = add_scalar(softplus(slice(out, 3, cfg_.d, 2 * cfg_.d)), static_cast<T>(cfg_.sigma_floor));
    return g;
}

template <typename T>
Tensor<T> Vae<T>::reparameterize(const Posterior& g, const Tensor<T>& noise) const
{
    return add(g.mu, mul(g.sigma, noise));
}

template <typename T>
Tensor<T> Vae<T>::reparameterize(const Posterior& g, const RngKey& key) const
{
    const Shape& s = g.mu.shape();
    const std::size_t per = g.mu.size() / s[0];
    std::vector<T> eps(g.mu.size());
    for (std::size_t n = 0; n < s[0]; ++n) {
        Rng rng(key.child(n));
        for (std::size_t i = 0; i < per; ++i) {
            eps[n * per + i] = static_cast<T>(rng.normal());
        }
    }
    return reparameterize(g, Tensor<T>(s, std::move(eps)));
}

template <typename T>
Tensor<T> Vae<T>::decode(const Tensor<T>& z) const
{
    const Shape& s = z.shape();
    if (s.size() != 4 || s[1] != cfg_.latent_h() || s[2] != cfg_.latent_w() || s[3] != cfg_.d) {
        throw Error(ErrorCode::shape_mismatch, "decode expects [n, " + std::to_string(cfg_.latent_h()) + ", " +
                                                   std::to_string(cfg_.latent_w()) + ", " + std::to_string(cfg_.d) +
                                                   "], got " + shape_str(s));
    }
    Tensor<T> h = gelu(conv(z, "dec.in", 1, 1));
    for (std::size_t i = cfg_.stages(); i-- > 0;) {
        h = gelu(conv(upsample2x(h), "dec.conv" + std::to_string(i), 1, 1));
    }
    return sigmoid(conv(h, "dec.out", 1, 1));
}

template <typename T>
typename Vae<T>::Loss Vae<T>::elbo_loss(const Tensor<T>& images, const Posterior& g, const Tensor<T>& recon,
                                       double beta) const
{
    Loss l;
    l.mse = mean(square(sub(recon, images)));
    // 0.5 * (mu^2 + sigma^2 - 1 - 2 ln sigma), summed over latent dims, averaged over the batch
    const Tensor<T> terms = add_scalar(sub(add(square(g.mu), square(g.sigma)), scale(log(g.sigma), T{2})), T{-1});
    const T per_example = T{0.5} / static_cast<T>(images.dim(0));
    l.kl = scale(sum(terms), per_example);
    l.total = add(l.mse, scale(l.kl, static_cast<T>(beta)));
    return l;
}

template class Vae<float>;
template class Vae<double>;

} // namespace givt
