#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace recurate {

// Keyed counter-style RNG built on the SplitMix64 finalizer.
//
// A stream is identified by a 64-bit state; fold(key) derives an
// independent child stream as a pure function of (state, key), so any
// tuple of keys (seed, m, i, b, s, ...) names the same stream everywhere.
// This is what makes seeded reruns bit-identical regardless of thread
// count and makes common-random-number identities exact.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : state_(mix(seed ^ 0x5851f42d4c957f2dULL)) {}

    // Child stream for a subcomputation. Does not advance this stream.
    [[nodiscard]] RngStream fold(std::uint64_t key) const {
        RngStream child(0);
        child.state_ = mix(state_ ^ mix(key * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL));
        child.has_cached_normal_ = false;
        return child;
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1), safe for log().
    double uniform_pos() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double a = 6.283185307179586476925286766559 * uniform();
        cached_normal_ = r * std::sin(a);
        has_cached_normal_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential() { return -std::log(uniform_pos()); }

    // Gamma(shape, scale) via Marsaglia-Tsang, with the boost for shape < 1.
    double gamma(double shape, double scale = 1.0) {
        if (shape < 1.0) {
            const double u = uniform_pos();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v * scale;
        }
    }

    // Poisson: Knuth's product method for small means, PTRS rejection otherwise.
    long poisson(double mu) {
        if (mu <= 0.0) return 0;
        if (mu < 12.0) {
            const double limit = std::exp(-mu);
            long k = 0;
            double prod = uniform();
            while (prod > limit) {
                ++k;
                prod *= uniform();
            }
            return k;
        }
        return poisson_ptrs(mu);
    }

    // Negative binomial with mean mu, dispersion phi (variance mu + mu^2/phi),
    // sampled as a gamma-Poisson mixture.
    long negbin(double mu, double phi) {
        if (mu <= 0.0) return 0;
        const double lambda = gamma(phi, mu / phi);
        return poisson(lambda);
    }

    // Inverse-CDF draw from an explicit finite pmf (probabilities sum to ~1).
    long discrete(std::span<const double> pmf) {
        double u = uniform();
        double acc = 0.0;
        for (std::size_t j = 0; j < pmf.size(); ++j) {
            acc += pmf[j];
            if (u < acc) return static_cast<long>(j);
        }
        return static_cast<long>(pmf.size()) - 1;
    }

    // Dirichlet(1,...,1) draw: exponentials normalized to the simplex.
    std::vector<double> dirichlet_uniform(std::size_t n) {
        std::vector<double> w(n);
        double total = 0.0;
        for (auto& wi : w) {
            wi = exponential();
            total += wi;
        }
        for (auto& wi : w) wi /= total;
        return w;
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    // Hormann's PTRS transformed-rejection sampler, valid for mu >= 10.
    long poisson_ptrs(double mu) {
        const double b = 0.931 + 2.53 * std::sqrt(mu);
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        const double log_mu = std::log(mu);
        for (;;) {
            double u = uniform() - 0.5;
            double v = uniform();
            double us = 0.5 - std::fabs(u);
            double k = std::floor((2.0 * a / us + b) * u + mu + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<long>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                k * log_mu - mu - std::lgamma(k + 1.0)) {
                return static_cast<long>(k);
            }
        }
    }

    std::uint64_t state_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace recurate
