#pragma once

#include <Eigen/Dense>

#include <limits>

namespace recurate {

enum class GlmFamily {
    logistic,
    poisson,
    negative_binomial,
};

struct GlmFit {
    Eigen::VectorXd coef;
    double dispersion = std::numeric_limits<double>::infinity();  // negbin only
    bool converged = false;
    bool ridged = false;  // tiny-L2 fallback triggered (separation or singular design)
    int iterations = 0;
    double loglik = 0.0;
};

// Iteratively reweighted least squares for the log-link Poisson / negative binomial and the
// logistic family. The offset enters the linear predictor additively (log exposure for count
// families). Separation and singular designs fall back to a ridge penalty of 1e-6 and are
// flagged, never silently dropped.
GlmFit fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, GlmFamily family,
               const Eigen::VectorXd& offset, int max_iter = 100, double tol = 1e-10);

GlmFit fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, GlmFamily family);

}  // namespace recurate
