#pragma once

#include <functional>
#include <span>

namespace givt::harness {

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> x);

/// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

/// Two-sample Kolmogorov-Smirnov test (asymptotic p-value with the usual
/// small-sample correction on the effective size).
TestResult ks_two_sample(std::span<const double> a, std::span<const double> b);
TestResult ks_one_sample(std::span<const double> x, const std::function<double(double)>& cdf);

/// Spearman rank correlation (average ranks for ties); two-sided p-value from
/// the t approximation with n - 2 degrees of freedom.
TestResult spearman(std::span<const double> x, std::span<const double> y);

} // namespace givt::harness
