#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "givt/dist.hpp"
#include "givt/model.hpp"
#include "givt/rng.hpp"

namespace givt {

enum class ScheduleKind { cosine, power };

/// Masked-fraction schedule for iterative MaskGIT decoding.
struct ScheduleConfig {
    ScheduleKind kind = ScheduleKind::cosine;
    /// Exponent for the power family (1 - r^alpha).
    double alpha = 2.0;
    std::size_t steps = 16;
    /// Choice temperature t_C.
    double choice_temperature = 16.0;
    /// Scale the choice noise by (1 - i/S); off means constant t_C.
    bool anneal_choice = true;

    /// "cosine" or "pow:<alpha>".
    static ScheduleConfig parse(const std::string& text);
    std::string name() const;
    void validate() const;
};

/// Fraction of positions still masked at relative progress r in [0, 1].
double schedule_eval(const ScheduleConfig& s, double r);

/// counts[i] = positions still masked after step i (counts[0] = n, counts[steps] = 0).
std::vector<std::size_t> masked_counts(const ScheduleConfig& s, std::size_t n);

struct SampleOptions {
    /// Variance-scaling temperature t.
    double temperature = 1.0;
    std::optional<GuidanceConfig> guidance;
    /// Causal decoding only; uncached runs re-forward the whole prefix each step.
    bool use_cache = true;
    /// Central-mass truncation (k = 1 only), applied instead of plain sampling.
    std::optional<double> truncation;
    /// Keep per-step mask states / beam traces in the result.
    bool record = false;

    void validate() const;
};

struct StepDiagnostics {
    std::size_t step = 0;
    /// Positions still masked before this step (maskgit) or the decoded position (causal).
    std::size_t masked = 0;
    /// Mixture-weighted predicted sigma averaged over the positions being predicted.
    double mean_sigma = 0.0;
    double acceptance_rate = 1.0;
    std::size_t fallbacks = 0;
    std::size_t improper = 0;
};

struct BeamCandidate {
    std::size_t parent = 0;
    std::size_t fan = 0;
    std::vector<double> values;
    double score = 0.0;
};

struct BeamStep {
    /// Prefix held by each live beam before this step.
    std::vector<std::vector<double>> parent_prefixes;
    std::vector<double> parent_scores;
    std::vector<BeamCandidate> candidates;
    /// Indices into `candidates`, best first.
    std::vector<std::size_t> selected;
};

struct DecodeResult {
    std::vector<double> z;
    /// Cumulative log-probability under the variance-scaled conditional predictions.
    double log_prob = 0.0;
    std::vector<StepDiagnostics> steps;
    std::vector<MaskState> states;
    /// z after each maskgit step (masked positions hold zeros).
    std::vector<std::vector<double>> trajectory;
    std::vector<BeamStep> beam_trace;
    /// Final scores of the surviving beams, best first.
    std::vector<double> beam_scores;
};

/// Left-to-right ancestral sampling. Position p draws from key.child(0).child(p).
template <typename T>
DecodeResult sample_causal(const GivtModel<T>& model, ConditionLabel label, std::size_t n_positions,
                           const SampleOptions& opts, const RngKey& key);

/// Beam search with F fans per beam. Candidate f of beam b at position p draws
/// from key.child(b * F + f).child(p), so B = F = 1 reproduces sample_causal.
template <typename T>
DecodeResult beam_search(const GivtModel<T>& model, ConditionLabel label, std::size_t n_positions, std::size_t beams,
                         std::size_t fans, const SampleOptions& opts, const RngKey& key);

/// Iterative unmasking from the all-masked state.
template <typename T>
DecodeResult maskgit_decode(const GivtModel<T>& model, ConditionLabel label, const ScheduleConfig& schedule,
                            const SampleOptions& opts, const RngKey& key);

/// Draws one position from single-position predictions (guided, truncated or plain).
/// Channel streams are key.child(0).child(ch).
std::vector<double> sample_position(const GmmParams& cond, const GmmParams* uncond, const SampleOptions& opts,
                                    const RngKey& key, StepDiagnostics* diag = nullptr);

} // namespace givt
