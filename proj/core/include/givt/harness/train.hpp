#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "givt/harness/config.hpp"
#include "givt/harness/data.hpp"
#include "givt/harness/io.hpp"
#include "givt/infer.hpp"
#include "givt/model.hpp"
#include "givt/vae.hpp"

namespace givt::harness {

/// [n, size, size, 1] tensor for images first..first+n of a set.
template <typename T>
Tensor<T> image_tensor(const LabeledImages& set, std::size_t first, std::size_t n);

struct VaeMetrics {
    double mse = 0.0;
    /// Closed-form KL per latent token (summed over its d channels), batch mean.
    double kl_per_token = 0.0;
};

/// Trains a VAE on the pre-generated training set. Rows are appended to `log` if given.
Vae<float> fit_vae(const VaeConfig& vcfg, const TrainConfig& tcfg, const LabeledImages& train, std::uint64_t seed,
                   CsvWriter* log = nullptr);

/// Held-out reconstruction MSE (posterior mean decoded) and KL.
VaeMetrics evaluate_vae(const Vae<float>& vae, const LabeledImages& heldout);

/// Encoder posteriors of a whole image set, in [n, tokens, d] layout.
struct PosteriorSet {
    std::size_t size = 0;
    std::size_t tokens = 0;
    std::size_t d = 0;
    std::vector<float> mu;
    std::vector<float> sigma;
    std::vector<std::size_t> labels;
};

PosteriorSet encode_dataset(const Vae<float>& vae, const LabeledImages& images);

/// Supplies GIVT training batches.
class LatentSource {
public:
    virtual ~LatentSource() = default;
    /// Fills z and labels for batch number `step`; keys are set by the caller.
    virtual void fill(std::size_t step, std::size_t batch_size, LatentBatch<float>& out) = 0;
};

/// Draws a fresh z ~ N(mu, sigma) from the encoder posterior for every example
/// of every batch, so no latent is ever reused as a point estimate.
class PosteriorLatents : public LatentSource {
public:
    PosteriorLatents(PosteriorSet set, RngKey key) : set_(std::move(set)), key_(key) {}
    void fill(std::size_t step, std::size_t batch_size, LatentBatch<float>& out) override;
    const PosteriorSet& set() const noexcept { return set_; }

private:
    PosteriorSet set_;
    RngKey key_;
};

class ArLatents : public LatentSource {
public:
    ArLatents(ArProcess process, RngKey key) : process_(process), key_(key) {}
    void fill(std::size_t step, std::size_t batch_size, LatentBatch<float>& out) override;

private:
    ArProcess process_;
    RngKey key_;
};

GivtModel<float> fit_givt(const GivtConfig& gcfg, const TrainConfig& tcfg, LatentSource& train, std::uint64_t seed,
                          CsvWriter* log = nullptr);

/// Mean NLL per position and channel (nats) over `batches` held-out batches,
/// with labels used as given.
double heldout_nll(const GivtModel<float>& model, LatentSource& heldout, std::size_t batches,
                   std::size_t batch_size, const RngKey& key);

/// Decodes a latent with the sampler named in `s`.
DecodeResult draw_latent(const GivtModel<float>& model, const SamplerConfig& s, std::size_t cls, const RngKey& key);

/// VAE decode of one [tokens x d] latent into image_size^2 pixels.
std::vector<double> decode_latent(const Vae<float>& vae, std::span<const double> z);

struct GradCheckResult {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst;
};

/// Relative error |a - n| / max(|a|, |n|, floor) between the analytic gradient
/// and a central difference with step h. probes == 0 checks every scalar;
/// otherwise up to `probes` evenly spaced entries per tensor.
GradCheckResult gradient_check(const std::string& name, ParameterStore<double>& params,
                               const std::function<Tensor<double>()>& loss, double h, double floor,
                               std::size_t probes = 0);

inline constexpr double gradcheck_step = 1e-5;
inline constexpr double gradcheck_floor = 1e-6;

/// Checks the VAE ELBO and both GIVT losses on two-layer toy configs.
std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, std::size_t probes = 0);

} // namespace givt::harness
