#include "givt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace givt {

double scheduled_learning_rate(const AdamConfig& cfg, std::size_t step)
{
    const double peak = cfg.learning_rate;
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
        return peak * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
    }
    const std::size_t decay_steps = cfg.total_steps > cfg.warmup_steps ? cfg.total_steps - cfg.warmup_steps : 1;
    const double progress =
        std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(decay_steps));
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return peak * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * cosine);
}

template <typename T>
Adam<T>::Adam(ParameterStore<T>& params, AdamConfig cfg) : params_(params), cfg_(cfg)
{
    for (const auto& [name, t] : params_) {
        m_.emplace_back(t.size(), 0.0);
        v_.emplace_back(t.size(), 0.0);
    }
}

template <typename T>
double Adam<T>::step()
{
    double sq = 0.0;
    for (auto& [name, t] : params_) {
        for (T g : t.grad()) {
            sq += static_cast<double>(g) * static_cast<double>(g);
        }
    }
    const double norm = std::sqrt(sq);
    const double clip = (cfg_.grad_clip_norm > 0.0 && norm > cfg_.grad_clip_norm) ? cfg_.grad_clip_norm / norm : 1.0;
    const double lr = scheduled_learning_rate(cfg_, step_);
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    std::size_t idx = 0;
    for (auto& [name, t] : params_) {
        auto& m = m_[idx];
        auto& v = v_[idx];
        ++idx;
        if (!t.has_grad()) {
            continue;
        }
        const auto grad = t.grad();
        auto value = t.mutable_data();
        const bool decay = t.rank() >= 2 && cfg_.weight_decay > 0.0;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = static_cast<double>(grad[i]) * clip;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
            if (decay) {
                update += cfg_.weight_decay * static_cast<double>(value[i]);
            }
            value[i] = static_cast<T>(static_cast<double>(value[i]) - lr * update);
        }
    }
    return norm;
}

template class Adam<float>;
template class Adam<double>;

} // namespace givt
