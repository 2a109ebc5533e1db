#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace recurate {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double expit(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// log(1 + exp(x)) without overflow; log(expit(x)) = -softplus(-x).
inline double softplus(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double normal_logpdf(double x, double mean, double sd) {
    static const double log_sqrt_2pi = 0.91893853320467274178032973640562;
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - log_sqrt_2pi;
}

inline double poisson_logpmf(long y, double mu) {
    if (mu <= 0.0) return y == 0 ? 0.0 : kNegInf;
    return static_cast<double>(y) * std::log(mu) - mu - std::lgamma(static_cast<double>(y) + 1.0);
}

// Mean mu, dispersion phi; variance mu + mu^2/phi.
inline double negbin_logpmf(long y, double mu, double phi) {
    if (mu <= 0.0) return y == 0 ? 0.0 : kNegInf;
    const double yd = static_cast<double>(y);
    return std::lgamma(yd + phi) - std::lgamma(phi) - std::lgamma(yd + 1.0) +
           phi * std::log(phi / (phi + mu)) + yd * std::log(mu / (phi + mu));
}

double digamma(double x);

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

inline double chi2_cdf(double x, double df) { return gamma_p(0.5 * df, 0.5 * x); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

double normal_quantile(double p);

// Quantile with linear interpolation between order statistics (type 7).
double percentile(std::span<const double> sorted_values, double p);

struct RunningMoments {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double sd() const { return std::sqrt(variance()); }
    double se() const { return n > 0 ? sd() / std::sqrt(static_cast<double>(n)) : 0.0; }
};

struct SummaryStats {
    double mean = 0.0;
    double sd = 0.0;
    double lo95 = 0.0;
    double hi95 = 0.0;
};

SummaryStats summarize_draws(std::span<const double> values);

// Pearson chi-square goodness-of-fit p-value for observed counts against
// expected counts (expected need not be normalized to the observed total).
double chi2_gof_pvalue(std::span<const double> observed, std::span<const double> expected);

}  // namespace recurate
