#include "givt/infer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "givt/error.hpp"

namespace givt {

ScheduleConfig ScheduleConfig::parse(const std::string& text)
{
    ScheduleConfig s;
    if (text == "cosine") {
        s.kind = ScheduleKind::cosine;
        return s;
    }
    if (text.rfind("pow:", 0) == 0) {
        s.kind = ScheduleKind::power;
        try {
            std::size_t used = 0;
            s.alpha = std::stod(text.substr(4), &used);
            if (used != text.size() - 4) {
                throw std::invalid_argument(text);
            }
        } catch (const std::exception&) {
            throw Error(ErrorCode::invalid_argument, "bad schedule exponent in '" + text + "'");
        }
        s.validate();
        return s;
    }
    throw Error(ErrorCode::invalid_argument, "unknown schedule '" + text + "' (expected cosine or pow:<alpha>)");
}

std::string ScheduleConfig::name() const
{
    if (kind == ScheduleKind::cosine) {
        return "cosine";
    }
    std::string a = std::to_string(alpha);
    a.erase(a.find_last_not_of('0') + 1);
    if (!a.empty() && a.back() == '.') {
        a.pop_back();
    }
    return "pow:" + a;
}

void ScheduleConfig::validate() const
{
    if (kind == ScheduleKind::power && !(alpha > 0.0 && std::isfinite(alpha))) {
        throw Error(ErrorCode::invalid_argument, "schedule exponent must be positive");
    }
    if (steps < 1) {
        throw Error(ErrorCode::invalid_argument, "schedule needs at least one step");
    }
    if (!(choice_temperature >= 0.0)) {
        throw Error(ErrorCode::invalid_argument, "choice temperature must be >= 0");
    }
}

double schedule_eval(const ScheduleConfig& s, double r)
{
    if (!(r >= 0.0 && r <= 1.0)) {
        throw Error(ErrorCode::domain, "schedule progress must lie in [0, 1]");
    }
    if (s.kind == ScheduleKind::cosine) {
        // cos(pi/2) is 6e-17, not 0
        return r == 1.0 ? 0.0 : std::cos(std::numbers::pi / 2.0 * r);
    }
    return 1.0 - std::pow(r, s.alpha);
}

std::vector<std::size_t> masked_counts(const ScheduleConfig& s, std::size_t n)
{
    s.validate();
    std::vector<std::size_t> counts(s.steps + 1);
    counts[0] = n;
    for (std::size_t i = 1; i <= s.steps; ++i) {
        const double r = static_cast<double>(i) / static_cast<double>(s.steps);
        const auto c = static_cast<std::size_t>(std::round(static_cast<double>(n) * schedule_eval(s, r)));
        counts[i] = std::min(c, counts[i - 1]);
    }
    counts[s.steps] = 0;
    return counts;
}

void SampleOptions::validate() const
{
    if (!(temperature > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "temperature must be > 0");
    }
    if (guidance) {
        guidance->validate();
    }
    if (truncation && guidance) {
        throw Error(ErrorCode::unsupported, "truncation and guidance cannot be combined");
    }
}

std::vector<double> sample_position(const GmmParams& cond, const GmmParams* uncond, const SampleOptions& opts,
                                    const RngKey& key, StepDiagnostics* diag)
{
    if (opts.guidance) {
        if (uncond == nullptr) {
            throw Error(ErrorCode::invalid_argument, "guided sampling needs unconditional predictions");
        }
        CfgSampleResult r = cfg_rejection_sample(cond, *uncond, *opts.guidance, key);
        if (diag) {
            diag->acceptance_rate = r.acceptance_rate();
            diag->fallbacks += r.fallbacks;
            diag->improper += r.improper;
        }
        return std::move(r.z);
    }
    if (opts.truncation) {
        return truncate(cond, *opts.truncation).sample(key);
    }
    return gmm_sample(cond, key);
}

namespace {

/// Produces next-position predictions for one growing causal prefix.
template <typename T>
class CausalStepper {
public:
    CausalStepper(const GivtModel<T>& model, std::size_t label, bool use_cache)
        : model_(model), label_(label), use_cache_(use_cache), cache_(model.new_cache())
    {
    }

    /// Predictions for position `prefix.size() / d`.
    GmmParams next(const std::vector<double>& prefix)
    {
        const std::size_t d = model_.config().d;
        const std::size_t pos = prefix.size() / d;
        if (!use_cache_) {
            return model_.predict_causal(prefix, pos + 1, label_).at_position(pos);
        }
        const auto prev = pos == 0 ? std::span<const double>() : std::span<const double>(prefix).subspan((pos - 1) * d, d);
        const std::vector<T> row = model_.causal_input_row(pos, label_, prev);
        const std::vector<T> head = model_.infer_rows(row, 1, cache_, true);
        return model_.to_gmm(head, 1);
    }

private:
    const GivtModel<T>& model_;
    std::size_t label_;
    bool use_cache_;
    KvCache<T> cache_;
};

void check_causal(const GivtConfig& cfg, std::size_t n_positions)
{
    if (cfg.mode != GivtMode::causal) {
        throw Error(ErrorCode::invalid_argument, "causal decoding needs a causal-mode model");
    }
    if (n_positions < 1 || n_positions > cfg.tokens) {
        throw Error(ErrorCode::invalid_argument, "n_positions must lie in [1, tokens]");
    }
}

} // namespace

template <typename T>
DecodeResult sample_causal(const GivtModel<T>& model, ConditionLabel label, std::size_t n_positions,
                           const SampleOptions& opts, const RngKey& key)
{
    const GivtConfig& cfg = model.config();
    check_causal(cfg, n_positions);
    opts.validate();
    const RngKey stream = key.child(std::uint64_t{0});
    CausalStepper<T> cond(model, label.resolve(cfg), opts.use_cache);
    std::optional<CausalStepper<T>> uncond;
    if (opts.guidance) {
        uncond.emplace(model, cfg.null_class(), opts.use_cache);
    }
    DecodeResult out;
    out.z.reserve(n_positions * cfg.d);
    for (std::size_t p = 0; p < n_positions; ++p) {
        const GmmParams pc = scale_variance(cond.next(out.z), opts.temperature);
        std::optional<GmmParams> pu;
        if (uncond) {
            pu = scale_variance(uncond->next(out.z), opts.temperature);
        }
        StepDiagnostics diag;
        diag.step = p;
        diag.masked = p;
        diag.mean_sigma = pc.mean_scale();
        const std::vector<double> v = sample_position(pc, pu ? &*pu : nullptr, opts, stream.child(p), &diag);
        out.log_prob += gmm_log_prob(pc, v)[0];
        out.z.insert(out.z.end(), v.begin(), v.end());
        out.steps.push_back(diag);
    }
    return out;
}

template <typename T>
DecodeResult beam_search(const GivtModel<T>& model, ConditionLabel label, std::size_t n_positions, std::size_t beams,
                         std::size_t fans, const SampleOptions& opts, const RngKey& key)
{
    const GivtConfig& cfg = model.config();
    check_causal(cfg, n_positions);
    opts.validate();
    if (beams < 1 || fans < 1) {
        throw Error(ErrorCode::invalid_argument, "beam search needs B >= 1 and F >= 1");
    }
    struct Beam {
        std::vector<double> z;
        double score = 0.0;
        CausalStepper<T> cond;
        std::optional<CausalStepper<T>> uncond;
    };
    const std::size_t label_id = label.resolve(cfg);
    std::vector<Beam> live;
    for (std::size_t b = 0; b < beams; ++b) {
        Beam beam{{}, 0.0, CausalStepper<T>(model, label_id, opts.use_cache), std::nullopt};
        if (opts.guidance) {
            beam.uncond.emplace(model, cfg.null_class(), opts.use_cache);
        }
        live.push_back(std::move(beam));
    }

    DecodeResult out;
    for (std::size_t p = 0; p < n_positions; ++p) {
        std::vector<BeamCandidate> cands;
        cands.reserve(beams * fans);
        StepDiagnostics diag;
        diag.step = p;
        diag.masked = p;
        double sigma_sum = 0.0;
        double accept_sum = 0.0;
        for (std::size_t b = 0; b < live.size(); ++b) {
            const GmmParams pc = scale_variance(live[b].cond.next(live[b].z), opts.temperature);
            std::optional<GmmParams> pu;
            if (live[b].uncond) {
                pu = scale_variance(live[b].uncond->next(live[b].z), opts.temperature);
            }
            sigma_sum += pc.mean_scale();
            for (std::size_t f = 0; f < fans; ++f) {
                StepDiagnostics cd;
                std::vector<double> v =
                    sample_position(pc, pu ? &*pu : nullptr, opts, key.child(b * fans + f).child(p), &cd);
                accept_sum += cd.acceptance_rate;
                diag.fallbacks += cd.fallbacks;
                diag.improper += cd.improper;
                const double score = live[b].score + gmm_log_prob(pc, v)[0];
                cands.push_back({b, f, std::move(v), score});
            }
        }
        diag.mean_sigma = sigma_sum / static_cast<double>(live.size());
        diag.acceptance_rate = accept_sum / static_cast<double>(cands.size());
        out.steps.push_back(diag);

        std::vector<std::size_t> order(cands.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const BeamCandidate& x = cands[a];
            const BeamCandidate& y = cands[b];
            if (x.score != y.score) {
                return x.score > y.score;
            }
            if (x.parent != y.parent) {
                return x.parent < y.parent;
            }
            return x.fan < y.fan;
        });
        order.resize(std::min(beams, order.size()));

        if (opts.record) {
            BeamStep step;
            for (const Beam& beam : live) {
                step.parent_prefixes.push_back(beam.z);
                step.parent_scores.push_back(beam.score);
            }
            step.candidates = cands;
            step.selected = order;
            out.beam_trace.push_back(std::move(step));
        }

        std::vector<Beam> next;
        next.reserve(order.size());
        for (std::size_t idx : order) {
            BeamCandidate& c = cands[idx];
            Beam nb{live[c.parent].z, c.score, live[c.parent].cond, live[c.parent].uncond};
            nb.z.insert(nb.z.end(), c.values.begin(), c.values.end());
            next.push_back(std::move(nb));
        }
        live = std::move(next);
    }
    out.z = live.front().z;
    out.log_prob = live.front().score;
    for (const Beam& beam : live) {
        out.beam_scores.push_back(beam.score);
    }
    return out;
}

template <typename T>
DecodeResult maskgit_decode(const GivtModel<T>& model, ConditionLabel label, const ScheduleConfig& schedule,
                            const SampleOptions& opts, const RngKey& key)
{
    const GivtConfig& cfg = model.config();
    if (cfg.mode != GivtMode::maskgit) {
        throw Error(ErrorCode::invalid_argument, "maskgit decoding needs a maskgit-mode model");
    }
    opts.validate();
    const std::size_t n = cfg.tokens;
    const std::size_t d = cfg.d;
    const std::size_t steps = schedule.steps;
    const std::vector<std::size_t> counts = masked_counts(schedule, n);
    const std::size_t label_id = label.resolve(cfg);

    DecodeResult out;
    out.z.assign(n * d, 0.0);
    MaskState state = MaskState::all_masked(n);
    if (opts.record) {
        out.states.push_back(state);
    }
    for (std::size_t i = 1; i <= steps; ++i) {
        const RngKey step_key = key.child("step").child(i);
        const GmmParams pc = scale_variance(model.predict_maskgit(out.z, state, label_id), opts.temperature);
        std::optional<GmmParams> pu;
        if (opts.guidance) {
            pu = scale_variance(model.predict_maskgit(out.z, state, cfg.null_class()), opts.temperature);
        }
        const double progress = static_cast<double>(i) / static_cast<double>(steps);
        const double noise_scale = schedule.choice_temperature * (schedule.anneal_choice ? 1.0 - progress : 1.0);

        StepDiagnostics diag;
        diag.step = i;
        diag.masked = state.count();
        struct Proposal {
            std::size_t pos;
            double confidence;
            std::vector<double> values;
        };
        std::vector<Proposal> proposals;
        double sigma_sum = 0.0;
        double accept_sum = 0.0;
        for (std::size_t pos = 0; pos < n; ++pos) {
            if (!state.masked[pos]) {
                continue;
            }
            const GmmParams cp = pc.at_position(pos);
            std::optional<GmmParams> up;
            if (pu) {
                up = pu->at_position(pos);
            }
            sigma_sum += cp.mean_scale();
            StepDiagnostics pd;
            std::vector<double> v = sample_position(cp, up ? &*up : nullptr, opts, step_key.child(pos), &pd);
            accept_sum += pd.acceptance_rate;
            diag.fallbacks += pd.fallbacks;
            diag.improper += pd.improper;
            double confidence = gmm_log_prob(cp, v)[0];
            if (noise_scale > 0.0) {
                Rng choice(step_key.child(pos).child("choice"));
                confidence += noise_scale * choice.gumbel();
            }
            proposals.push_back({pos, confidence, std::move(v)});
        }
        diag.mean_sigma = sigma_sum / static_cast<double>(proposals.size());
        diag.acceptance_rate = accept_sum / static_cast<double>(proposals.size());
        out.steps.push_back(diag);

        const std::size_t to_fix = proposals.size() - std::min(counts[i], proposals.size());
        std::stable_sort(proposals.begin(), proposals.end(),
                         [](const Proposal& a, const Proposal& b) { return a.confidence > b.confidence; });
        for (std::size_t j = 0; j < to_fix; ++j) {
            const Proposal& pr = proposals[j];
            std::copy(pr.values.begin(), pr.values.end(), out.z.begin() + static_cast<std::ptrdiff_t>(pr.pos * d));
            state.masked[pr.pos] = 0;
            out.log_prob += gmm_log_prob(pc.at_position(pr.pos), pr.values)[0];
        }
        state.step = i;
        if (opts.record) {
            out.states.push_back(state);
            out.trajectory.push_back(out.z);
        }
    }
    return out;
}

#define GIVT_INSTANTIATE_INFER(T)                                                                                  \
    template DecodeResult sample_causal<T>(const GivtModel<T>&, ConditionLabel, std::size_t, const SampleOptions&, \
                                           const RngKey&);                                                         \
    template DecodeResult beam_search<T>(const GivtModel<T>&, ConditionLabel, std::size_t, std::size_t,           \
                                         std::size_t, const SampleOptions&, const RngKey&);                        \
    template DecodeResult maskgit_decode<T>(const GivtModel<T>&, ConditionLabel, const ScheduleConfig&,           \
                                            const SampleOptions&, const RngKey&);

GIVT_INSTANTIATE_INFER(float)
GIVT_INSTANTIATE_INFER(double)

} // namespace givt
