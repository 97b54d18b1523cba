#include "givt/harness/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "givt/error.hpp"

namespace givt::harness {

double mean(std::span<const double> x)
{
    if (x.empty()) {
        throw Error(ErrorCode::invalid_argument, "mean of an empty sample");
    }
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x)
{
    if (x.size() < 2) {
        throw Error(ErrorCode::invalid_argument, "stddev needs at least two values");
    }
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) {
        ss += (v - m) * (v - m);
    }
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double kolmogorov_survival(double lambda)
{
    if (lambda < 0.2) {
        return 1.0;
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16 * std::abs(sum) + 1e-300) {
            break;
        }
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

double ks_p(double d, double effective_n)
{
    const double sn = std::sqrt(effective_n);
    return kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d);
}

} // namespace

TestResult ks_two_sample(std::span<const double> a, std::span<const double> b)
{
    if (a.empty() || b.empty()) {
        throw Error(ErrorCode::invalid_argument, "KS test needs non-empty samples");
    }
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double na = static_cast<double>(x.size());
    const double nb = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) {
            ++i;
        }
        while (j < y.size() && y[j] == v) {
            ++j;
        }
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return {d, ks_p(d, na * nb / (na + nb))};
}

TestResult ks_one_sample(std::span<const double> x, const std::function<double(double)>& cdf)
{
    if (x.empty()) {
        throw Error(ErrorCode::invalid_argument, "KS test needs a non-empty sample");
    }
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = cdf(s[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return {d, ks_p(d, n)};
}

namespace {

std::vector<double> ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            r[order[t]] = avg;
        }
        i = j + 1;
    }
    return r;
}

} // namespace

TestResult spearman(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 3) {
        throw Error(ErrorCode::invalid_argument, "Spearman needs two equal-length samples of size >= 3");
    }
    const std::vector<double> rx = ranks(x);
    const std::vector<double> ry = ranks(y);
    const double mx = mean(rx);
    const double my = mean(ry);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return {0.0, 1.0};
    }
    const double rho = sxy / std::sqrt(sxx * syy);
    const double df = static_cast<double>(x.size() - 2);
    if (std::abs(rho) >= 1.0) {
        return {rho, 0.0};
    }
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    const boost::math::students_t dist(df);
    return {rho, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)))};
}

} // namespace givt::harness
