#include "recurate/glm.hpp"

#include <algorithm>
#include <cmath>

#include "recurate/errors.hpp"
#include "recurate/stats.hpp"

namespace recurate {

namespace {

constexpr double kRidge = 1e-6;
constexpr double kCoefBound = 15.0;  // |coef| beyond this signals separation on the logit/log scale

double family_loglik(GlmFamily family, const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                     double phi) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        switch (family) {
            case GlmFamily::logistic:
                ll += y[i] > 0.5 ? std::log(mu[i]) : std::log1p(-mu[i]);
                break;
            case GlmFamily::poisson:
                ll += poisson_logpmf(static_cast<long>(std::lround(y[i])), mu[i]);
                break;
            case GlmFamily::negative_binomial:
                ll += negbin_logpmf(static_cast<long>(std::lround(y[i])), mu[i], phi);
                break;
        }
    }
    return ll;
}

struct IrlsResult {
    Eigen::VectorXd coef;
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
};

IrlsResult run_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, GlmFamily family,
                    const Eigen::VectorXd& offset, double phi, double ridge, int max_iter,
                    double tol, const Eigen::VectorXd& start) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    IrlsResult res;
    res.coef = start;

    Eigen::VectorXd eta = X * res.coef + offset;
    Eigen::VectorXd mu(n);
    Eigen::VectorXd w(n);
    Eigen::VectorXd z(n);
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (int iter = 1; iter <= max_iter; ++iter) {
        res.iterations = iter;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (family == GlmFamily::logistic) {
                const double m = std::clamp(expit(eta[i]), 1e-12, 1.0 - 1e-12);
                mu[i] = m;
                w[i] = m * (1.0 - m);
                z[i] = eta[i] - offset[i] + (y[i] - m) / w[i];
            } else {
                const double m = std::exp(std::clamp(eta[i], -500.0, 500.0));
                mu[i] = std::max(m, 1e-12);
                w[i] = family == GlmFamily::poisson ? mu[i] : mu[i] / (1.0 + mu[i] / phi);
                z[i] = eta[i] - offset[i] + (y[i] - mu[i]) / mu[i];
            }
        }
        Eigen::MatrixXd a = X.transpose() * w.asDiagonal() * X;
        if (ridge > 0.0) a.diagonal().array() += ridge;
        const Eigen::VectorXd b = X.transpose() * (w.cwiseProduct(z));
        const Eigen::VectorXd coef_new = a.ldlt().solve(b);
        if (!coef_new.allFinite()) return res;  // converged stays false

        const double step = (coef_new - res.coef).cwiseAbs().maxCoeff();
        res.coef = coef_new;
        eta = X * res.coef + offset;
        for (Eigen::Index i = 0; i < n; ++i) {
            mu[i] = family == GlmFamily::logistic
                        ? std::clamp(expit(eta[i]), 1e-12, 1.0 - 1e-12)
                        : std::exp(std::clamp(eta[i], -500.0, 500.0));
        }
        double ll = family_loglik(family, y, mu, phi);
        if (ridge > 0.0) ll -= 0.5 * ridge * res.coef.squaredNorm();
        const bool ll_settled = std::abs(ll - prev_ll) < tol * (std::abs(ll) + 1.0);
        prev_ll = ll;
        res.loglik = ll;
        if (step < 1e-10 || ll_settled) {
            res.converged = true;
            return res;
        }
    }
    return res;
}

// Profile log-likelihood maximization over log(phi) by golden-section search.
double optimize_phi(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = -7.0;
    double hi = 9.0;
    auto ll_at = [&](double logphi) {
        const double phi = std::exp(logphi);
        double ll = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            ll += negbin_logpmf(static_cast<long>(std::lround(y[i])), mu[i], phi);
        }
        return ll;
    };
    double x1 = hi - gr * (hi - lo);
    double x2 = lo + gr * (hi - lo);
    double f1 = ll_at(x1);
    double f2 = ll_at(x2);
    for (int it = 0; it < 60 && hi - lo > 1e-6; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = ll_at(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = ll_at(x1);
        }
    }
    return std::exp(0.5 * (lo + hi));
}

}  // namespace

GlmFit fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, GlmFamily family,
               const Eigen::VectorXd& offset, int max_iter, double tol) {
    if (X.rows() == 0 || X.cols() == 0) throw DataError("empty design matrix");
    if (y.size() != X.rows()) throw ConfigError("response length does not match the design");
    if (offset.size() != X.rows()) throw ConfigError("offset length does not match the design");
    if (family == GlmFamily::logistic) {
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y[i] != 0.0 && y[i] != 1.0) throw DataError("logistic response must be 0/1");
        }
    }

    const Eigen::VectorXd start = Eigen::VectorXd::Zero(X.cols());
    GlmFit fit;

    if (family == GlmFamily::negative_binomial) {
        // Alternate beta-given-phi IRLS with profile updates of phi.
        double phi = 1.0;
        Eigen::VectorXd coef = start;
        IrlsResult inner;
        double prev_ll = -std::numeric_limits<double>::infinity();
        bool ridged = false;
        for (int outer = 0; outer < 30; ++outer) {
            inner = run_irls(X, y, family, offset, phi, ridged ? kRidge : 0.0, max_iter, tol, coef);
            if (!inner.converged || inner.coef.cwiseAbs().maxCoeff() > kCoefBound) {
                if (!ridged) {
                    ridged = true;
                    coef = start;
                    phi = 1.0;
                    prev_ll = -std::numeric_limits<double>::infinity();
                    continue;
                }
            }
            coef = inner.coef;
            const Eigen::VectorXd eta = X * coef + offset;
            Eigen::VectorXd mu(eta.size());
            for (Eigen::Index i = 0; i < eta.size(); ++i) {
                mu[i] = std::exp(std::clamp(eta[i], -500.0, 500.0));
            }
            phi = optimize_phi(y, mu);
            const double ll = family_loglik(family, y, mu, phi);
            if (std::abs(ll - prev_ll) < tol * (std::abs(ll) + 1.0)) {
                prev_ll = ll;
                break;
            }
            prev_ll = ll;
        }
        fit.coef = coef;
        fit.dispersion = phi;
        fit.converged = inner.converged;
        fit.ridged = ridged;
        fit.iterations = inner.iterations;
        fit.loglik = prev_ll;
        return fit;
    }

    IrlsResult plain = run_irls(X, y, family, offset, 0.0, 0.0, max_iter, tol, start);
    const bool separated =
        plain.converged && plain.coef.cwiseAbs().maxCoeff() > kCoefBound;
    if (plain.converged && !separated) {
        fit.coef = plain.coef;
        fit.converged = true;
        fit.iterations = plain.iterations;
        fit.loglik = plain.loglik;
        return fit;
    }

    IrlsResult ridged = run_irls(X, y, family, offset, 0.0, kRidge, max_iter, tol, start);
    fit.coef = ridged.converged || ridged.coef.allFinite() ? ridged.coef : start;
    fit.converged = ridged.converged;
    fit.ridged = true;
    fit.iterations = ridged.iterations;
    fit.loglik = ridged.loglik;
    return fit;
}

GlmFit fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, GlmFamily family) {
    return fit_glm(X, y, family, Eigen::VectorXd::Zero(X.rows()));
}

}  // namespace recurate
