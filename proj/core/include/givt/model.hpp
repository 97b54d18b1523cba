#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "givt/dist.hpp"
#include "givt/params.hpp"
#include "givt/rng.hpp"
#include "givt/tensor.hpp"

namespace givt {

enum class GivtMode { causal, maskgit };

std::string to_string(GivtMode mode);
GivtMode parse_mode(const std::string& name);

struct GivtConfig {
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t hidden = 256;
    std::size_t mlp_hidden = 1024;
    /// Channels per token.
    std::size_t d = 4;
    /// Mixture components per channel.
    std::size_t k = 1;
    /// Latent tokens per sequence (h * w).
    std::size_t tokens = 64;
    /// Real classes; the null class gets id == num_classes.
    std::size_t num_classes = 1;
    double label_dropout = 0.1;
    GivtMode mode = GivtMode::causal;
    double sigma_floor = default_sigma_floor;

    std::size_t null_class() const noexcept { return num_classes; }
    /// Rows fed to the transformer: [CLS] + tokens-1 shifted inputs (causal)
    /// or [CLS] + tokens (maskgit).
    std::size_t context_length() const noexcept { return mode == GivtMode::causal ? tokens : tokens + 1; }
    std::size_t head_width() const noexcept { return 3 * d * k; }
    std::size_t embed_width() const noexcept { return mode == GivtMode::causal ? hidden : hidden / 2; }

    /// d*E + (C+1)*H + P*H + [maskgit: H] + L*(2H + 4H^2 + 2*H*M) + H + 3dk*(H + 1)
    /// with E the input-embedding width and P the context length.
    std::size_t parameter_count() const;
    void validate() const;
};

/// A class id or the null class used for unconditional predictions.
class ConditionLabel {
public:
    static ConditionLabel of(std::size_t cls) { return ConditionLabel(cls); }
    static ConditionLabel null() { return ConditionLabel(); }

    bool is_null() const noexcept { return !cls_.has_value(); }
    std::size_t resolve(const GivtConfig& cfg) const;

private:
    ConditionLabel() = default;
    explicit ConditionLabel(std::size_t cls) : cls_(cls) {}
    std::optional<std::size_t> cls_;
};

/// Which positions are hidden from the model (true = masked).
struct MaskState {
    std::vector<std::uint8_t> masked;
    std::size_t step = 0;

    static MaskState all_masked(std::size_t n) { return {std::vector<std::uint8_t>(n, 1), 0}; }
    std::size_t count() const;
};

/// A batch of latent sequences with one stream key per example.
template <typename T>
struct LatentBatch {
    std::size_t size = 0;
    std::vector<T> z;                // size x tokens x d
    std::vector<std::size_t> labels; // class ids (may already be the null id)
    std::vector<RngKey> keys;
    /// Off for evaluation: labels are used as given.
    bool drop_labels = true;
};

/// Stored attention keys/values per layer for incremental causal decoding.
template <typename T>
struct KvCache {
    std::vector<std::vector<T>> keys;
    std::vector<std::vector<T>> values;
    std::size_t length = 0;
};

/// Decoder-only transformer over real-valued tokens with a GMM output head.
///
/// Pre-LN blocks, no biases in attention, MLP or LayerNorm, GELU MLP,
/// learned absolute positions, one learned [CLS] row per class (+ null).
template <typename T>
class GivtModel {
public:
    GivtModel(GivtConfig cfg, std::uint64_t seed);

    const GivtConfig& config() const noexcept { return cfg_; }
    ParameterStore<T>& params() noexcept { return params_; }
    const ParameterStore<T>& params() const noexcept { return params_; }

    /// `z_inputs` is batch x (tokens-1) x d; returns [batch, tokens, hidden].
    Tensor<T> embed_causal(std::span<const T> z_inputs, std::span<const std::size_t> labels, std::size_t batch) const;
    /// `z` is batch x tokens x d, `mask` batch x tokens; returns [batch, tokens+1, hidden].
    Tensor<T> embed_maskgit(std::span<const T> z, std::span<const std::uint8_t> mask,
                            std::span<const std::size_t> labels, std::size_t batch) const;
    /// Transformer + head: [batch, rows, hidden] -> [batch, rows, 3dk].
    Tensor<T> forward(const Tensor<T>& hidden) const;

    /// Teacher-forced mean NLL (over positions and channels).
    Tensor<T> loss_causal(const LatentBatch<T>& batch) const;
    /// Mean NLL over randomly masked positions only.
    Tensor<T> loss_maskgit(const LatentBatch<T>& batch) const;
    Tensor<T> loss(const LatentBatch<T>& batch) const;

    /// Label after dropout for one example (stream key.child("label_dropout")).
    std::size_t dropped_label(std::size_t label, const RngKey& key) const;
    /// Mask drawn for one example during maskgit training.
    MaskState training_mask(const RngKey& key) const;

    // ---- inference path (no graph) ----

    KvCache<T> new_cache() const;

    /// Embedding row for causal input row `row` (0 = [CLS], r > 0 = token r-1).
    std::vector<T> causal_input_row(std::size_t row, std::size_t label, std::span<const double> prev_token) const;
    /// All maskgit input rows for one sequence.
    std::vector<T> maskgit_input_rows(std::span<const double> z, const MaskState& mask, std::size_t label) const;

    /// Runs `n_rows` new rows through the network after the rows already held
    /// in `cache` (appending to it); returns n_rows x 3dk head outputs.
    std::vector<T> infer_rows(std::span<const T> rows, std::size_t n_rows, KvCache<T>& cache, bool causal) const;

    /// Head rows -> mixture parameters.
    GmmParams to_gmm(std::span<const T> head, std::size_t positions) const;

    /// Uncached prediction for every position given a full sequence (causal mode).
    GmmParams predict_causal(std::span<const double> z, std::size_t n_positions, std::size_t label) const;
    /// Predictions for all tokens given a mask state (maskgit mode).
    GmmParams predict_maskgit(std::span<const double> z, const MaskState& mask, std::size_t label) const;

private:
    const Tensor<T>& p(const std::string& name) const { return params_.at(name); }

    GivtConfig cfg_;
    ParameterStore<T> params_;
};

} // namespace givt
