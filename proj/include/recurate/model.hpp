#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "recurate/cohort.hpp"
#include "recurate/rng.hpp"

namespace recurate {

enum class CountFamily { poisson, negative_binomial };
enum class LagTransform { raw_count, positive_indicator };

struct ModelSpec {
    CountFamily count_family = CountFamily::poisson;
    LagTransform lag_transform = LagTransform::raw_count;
    std::vector<std::string> covariate_names;
    int K = 0;
    double coef_prior_sd = 2.5;        // N(0, sd^2) on slope coefficients
    double hyper_mean_sd = 1.0;        // N(0, sd^2) on each smoothing-process level
    double sigma_max = 5.0;            // flat prior on process sigma, truncated to (0, sigma_max]
    double dispersion_prior_sd = 5.0;  // half-Normal scale for the negative binomial dispersion
    // When set, the count family is truncated at this value and renormalized,
    // everywhere (simulation, enumeration, likelihood). Used by the exact
    // enumeration oracle; estimation runs leave it unset.
    std::optional<long> count_cap;

    int p() const { return static_cast<int>(covariate_names.size()); }
};

struct Gar1Hyper {
    double mean = 0.0;
    double rho = 0.0;
    double sigma = 1.0;
};

struct Params {
    Eigen::VectorXd beta0;   // K per-interval death intercepts
    Eigen::VectorXd betaL;   // covariate effects on death
    double betaY = 0.0;      // lagged-count effect on death
    double betaA = 0.0;      // treatment effect on death
    Eigen::VectorXd theta0;  // K per-interval count intercepts
    Eigen::VectorXd thetaL;
    double thetaY = 0.0;
    double thetaA = 0.0;
    Gar1Hyper beta_h;   // smoothing process over beta0
    Gar1Hyper theta_h;  // smoothing process over theta0
    double dispersion = 1.0;  // negative binomial only; variance mu + mu^2/dispersion
};

Params make_zero_params(const ModelSpec& spec);

inline double lag_value(long y_lag, const ModelSpec& spec) {
    return spec.lag_transform == LagTransform::raw_count ? static_cast<double>(y_lag)
                                                         : (y_lag > 0 ? 1.0 : 0.0);
}

// Shared clamps so every code path (likelihood, simulation, enumeration) sees
// identical hazard and mean arithmetic.
inline double clamp_probability(double v) {
    return std::min(1.0 - 1e-15, std::max(1e-15, v));
}
inline double clamp_mean(double v) { return std::min(1e300, std::max(1e-300, v)); }

// Probability of being dead at the start of interval k given alive and
// uncensored at the start of interval k-1. Unused at k = 1 (everyone enters
// alive) but still evaluates. Clamped strictly inside (0,1).
double hazard(int k, int a, long y_lag, const Eigen::VectorXd& l, const Params& params,
              const ModelSpec& spec);

// Conditional mean of the interval-k event count given survival.
double count_mean(int k, int a, long y_lag, const Eigen::VectorXd& l, const Params& params,
                  const ModelSpec& spec);

// Log density of the Gaussian AR(1) smoothing process:
// x_1 ~ N(eta, sigma^2), x_k | x_{k-1} ~ N(eta(1-rho) + rho x_{k-1}, sigma^2).
double gar1_logpdf(const Eigen::VectorXd& x, double eta, double rho, double sigma);

// Count-family log pmf at mean mu, honoring the optional truncation cap.
double count_logpmf(long y, double mu, const Params& params, const ModelSpec& spec);

// Count pmf over {0, ..., cap}, truncated and renormalized.
std::vector<double> truncated_count_pmf(double mu, const Params& params, const ModelSpec& spec,
                                        long cap);

// Draw from the count family (truncated when the spec caps it).
long draw_count(RngStream& rng, double mu, const Params& params, const ModelSpec& spec);

// Death-process terms: one survival factor per at-risk row past interval 1
// plus the death transition for subjects whose death fires inside the grid.
// Censoring stops the product and contributes nothing.
double death_loglik(const PanelGrid& panel, const Params& params, const ModelSpec& spec);

// Count-family terms, one per at-risk row.
double count_loglik(const PanelGrid& panel, const Params& params, const ModelSpec& spec);

double log_likelihood(const PanelGrid& panel, const Params& params, const ModelSpec& spec);

// Priors split by model side so blockwise samplers can evaluate only what a
// block touches. Outside the support both return -inf.
double beta_side_log_prior(const Params& params, const ModelSpec& spec);
double theta_side_log_prior(const Params& params, const ModelSpec& spec);
double log_prior(const Params& params, const ModelSpec& spec);
double log_posterior(const PanelGrid& panel, const Params& params, const ModelSpec& spec);

// Gradient of log_posterior in the flat natural-space layout below; valid on
// the interior of the support.
Eigen::VectorXd grad_log_posterior(const PanelGrid& panel, const Params& params,
                                   const ModelSpec& spec);

// Flat layout: beta0(K), betaL(p), betaY, betaA, theta0(K), thetaL(p),
// thetaY, thetaA, beta mean/rho/sigma, theta mean/rho/sigma, dispersion (if
// negative binomial).
struct ParamLayout {
    int K = 0;
    int p = 0;
    bool has_dispersion = false;

    ParamLayout() = default;
    explicit ParamLayout(const ModelSpec& spec)
        : K(spec.K), p(spec.p()), has_dispersion(spec.count_family == CountFamily::negative_binomial) {}

    int dim() const { return 2 * K + 2 * p + 10 + (has_dispersion ? 1 : 0); }
    int beta0(int k) const { return k - 1; }  // 1-based interval index
    int betaL(int j) const { return K + j; }
    int betaY() const { return K + p; }
    int betaA() const { return K + p + 1; }
    int theta0(int k) const { return K + p + 2 + (k - 1); }
    int thetaL(int j) const { return 2 * K + p + 2 + j; }
    int thetaY() const { return 2 * K + 2 * p + 2; }
    int thetaA() const { return 2 * K + 2 * p + 3; }
    int beta_mean() const { return 2 * K + 2 * p + 4; }
    int beta_rho() const { return 2 * K + 2 * p + 5; }
    int beta_sigma() const { return 2 * K + 2 * p + 6; }
    int theta_mean() const { return 2 * K + 2 * p + 7; }
    int theta_rho() const { return 2 * K + 2 * p + 8; }
    int theta_sigma() const { return 2 * K + 2 * p + 9; }
    int dispersion() const { return 2 * K + 2 * p + 10; }

    Eigen::VectorXd flatten(const Params& params) const;
    Params unflatten(const Eigen::VectorXd& v) const;
    std::vector<std::string> names(const std::vector<std::string>& covariate_names) const;
};

}  // namespace recurate
