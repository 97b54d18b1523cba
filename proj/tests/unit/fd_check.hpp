#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "givt/ops.hpp"
#include "givt/rng.hpp"
#include "givt/tensor.hpp"

namespace givt::test {

// Central finite-difference check of d(loss)/d(inputs) at 64-bit.
inline double max_grad_rel_error(std::vector<Tensor<double>>& inputs,
                                 const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& loss,
                                 double h = 1e-5, double floor = 1e-6)
{
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    backward(loss(inputs));
    double worst = 0.0;
    NoGradGuard guard;
    for (auto& t : inputs) {
        const std::vector<double> g(t.grad().begin(), t.grad().end());
        for (std::size_t i = 0; i < t.size(); ++i) {
            auto v = t.mutable_data();
            const double saved = v[i];
            v[i] = saved + h;
            const double up = loss(inputs).item();
            v[i] = saved - h;
            const double down = loss(inputs).item();
            v[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = std::abs(numeric - g[i]) / std::max({std::abs(numeric), std::abs(g[i]), floor});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0)
{
    return Tensor<double>::randn(std::move(shape), scale, rng);
}

// Fixed random projection to a scalar so every output element matters.
inline Tensor<double> project(const Tensor<double>& y, std::uint64_t seed)
{
    Rng rng(RngKey(seed).child("projection"));
    const Tensor<double> r = Tensor<double>::randn(y.shape(), 1.0, rng);
    return sum(mul(y, r));
}

} // namespace givt::test
