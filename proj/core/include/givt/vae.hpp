#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "givt/dist.hpp"
#include "givt/params.hpp"
#include "givt/rng.hpp"
#include "givt/tensor.hpp"

namespace givt {

struct VaeConfig {
    std::size_t image_size = 32;
    std::size_t image_channels = 1;
    /// Latent channels per token.
    std::size_t d = 4;
    /// Spatial downsample factor; a power of two, one stride-2 stage per factor of two.
    std::size_t f = 4;
    /// Feature width of each downsampling stage (size log2(f)).
    std::vector<std::size_t> widths{8, 16};
    /// KL weight. The loss is per-pixel MSE + beta * (KL summed over latent dims, batch mean).
    double beta = 5e-5;
    double sigma_floor = default_sigma_floor;

    std::size_t stages() const;
    std::size_t latent_h() const { return image_size / f; }
    std::size_t latent_w() const { return image_size / f; }
    std::size_t tokens() const { return latent_h() * latent_w(); }
    void validate() const;
};

/// Convolutional beta-VAE over NHWC images in [0, 1].
///
/// Encoder: stride-2 3x3 conv + GELU per stage, then a 1x1 conv producing
/// 2d channels split into mean and raw scale (sigma = softplus + floor).
/// Decoder mirrors it with nearest upsampling + 3x3 convs and a sigmoid output.
template <typename T>
class Vae {
public:
    struct Posterior {
        Tensor<T> mu;    // [n, h, w, d]
        Tensor<T> sigma; // [n, h, w, d], > 0
    };

    struct Loss {
        Tensor<T> total;
        Tensor<T> mse;
        Tensor<T> kl;
    };

    Vae(VaeConfig cfg, std::uint64_t seed);

    const VaeConfig& config() const noexcept { return cfg_; }
    ParameterStore<T>& params() noexcept { return params_; }
    const ParameterStore<T>& params() const noexcept { return params_; }

    Posterior encode(const Tensor<T>& images) const;
    /// z = mu + sigma * noise; gradients reach both mu and sigma.
    Tensor<T> reparameterize(const Posterior& g, const Tensor<T>& noise) const;
    /// Draws the noise from per-example streams key.child(example).
    Tensor<T> reparameterize(const Posterior& g, const RngKey& key) const;
    Tensor<T> decode(const Tensor<T>& z) const;

    Loss elbo_loss(const Tensor<T>& images, const Posterior& g, const Tensor<T>& recon, double beta) const;

private:
    Tensor<T> conv(const Tensor<T>& x, const std::string& name, std::size_t stride, std::size_t pad) const;

    VaeConfig cfg_;
    ParameterStore<T> params_;
};

} // namespace givt
