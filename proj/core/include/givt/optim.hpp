#pragma once

#include <cstddef>
#include <vector>

#include "givt/params.hpp"

namespace givt {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::size_t warmup_steps = 100;
    std::size_t total_steps = 1000;
    /// Learning rate at the end of the cosine decay, relative to the peak.
    double final_lr_fraction = 0.05;
    double grad_clip_norm = 1.0;
};

/// Linear warmup to the peak rate followed by cosine decay.
double scheduled_learning_rate(const AdamConfig& cfg, std::size_t step);

/// Adam with decoupled weight decay (applied to tensors of rank >= 2 only).
template <typename T>
class Adam {
public:
    Adam(ParameterStore<T>& params, AdamConfig cfg);

    /// Applies one update from the accumulated gradients; returns the
    /// pre-clipping global gradient norm.
    double step();

    std::size_t steps_taken() const noexcept { return step_; }
    const AdamConfig& config() const noexcept { return cfg_; }

private:
    ParameterStore<T>& params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t step_ = 0;
};

} // namespace givt
