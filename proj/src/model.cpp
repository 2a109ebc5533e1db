#include "recurate/model.hpp"

#include <cmath>

#include "recurate/errors.hpp"
#include "recurate/stats.hpp"

namespace recurate {

namespace {

void check_k(int k, int K) {
    if (k < 1 || k > K) throw ConfigError("interval index " + std::to_string(k) + " outside 1.." + std::to_string(K));
}

void check_design(const Eigen::VectorXd& l, const Eigen::VectorXd& coef) {
    if (l.size() != coef.size())
        throw ConfigError("design vector length " + std::to_string(l.size()) +
                          " does not match coefficient length " + std::to_string(coef.size()));
}

void check_dims(const PanelGrid& panel, const Params& params, const ModelSpec& spec) {
    if (panel.K != spec.K) throw ConfigError("panel interval count does not match model spec");
    if (panel.p() != spec.p()) throw ConfigError("panel covariate count does not match model spec");
    if (params.beta0.size() != spec.K || params.theta0.size() != spec.K ||
        params.betaL.size() != spec.p() || params.thetaL.size() != spec.p())
        throw ConfigError("parameter dimensions do not match model spec");
}

double count_base_logpmf(long y, double lp, double mu, double phi, const ModelSpec& spec) {
    if (spec.count_family == CountFamily::poisson)
        return static_cast<double>(y) * lp - mu - std::lgamma(static_cast<double>(y) + 1.0);
    return negbin_logpmf(y, mu, phi);
}

// log of the truncated-family normalizer sum_{t=0..cap} f(t).
double log_trunc_norm(double lp, double mu, double phi, long cap, const ModelSpec& spec) {
    double best = kNegInf;
    for (long t = 0; t <= cap; ++t) best = std::max(best, count_base_logpmf(t, lp, mu, phi, spec));
    double acc = 0.0;
    for (long t = 0; t <= cap; ++t) acc += std::exp(count_base_logpmf(t, lp, mu, phi, spec) - best);
    return best + std::log(acc);
}

double count_term(long y, double lp, double mu, const Params& params, const ModelSpec& spec) {
    const double base = count_base_logpmf(y, lp, mu, params.dispersion, spec);
    if (!spec.count_cap) return base;
    if (y > *spec.count_cap) return kNegInf;
    return base - log_trunc_norm(lp, mu, params.dispersion, *spec.count_cap, spec);
}

// d log f / d lp and d log f / d phi for one count observation.
void count_grad(long y, double mu, double phi, const ModelSpec& spec, double& glp, double& gphi) {
    const bool nb = spec.count_family == CountFamily::negative_binomial;
    auto base_glp = [&](long t) {
        return nb ? static_cast<double>(t) - mu * (phi + static_cast<double>(t)) / (phi + mu)
                  : static_cast<double>(t) - mu;
    };
    auto base_gphi = [&](long t) {
        const double td = static_cast<double>(t);
        return digamma(td + phi) - digamma(phi) + std::log(phi / (phi + mu)) + (mu - td) / (phi + mu);
    };
    glp = base_glp(y);
    gphi = nb ? base_gphi(y) : 0.0;
    if (!spec.count_cap) return;
    const long cap = *spec.count_cap;
    const double lp = std::log(mu);
    const double logz = log_trunc_norm(lp, mu, phi, cap, spec);
    for (long t = 0; t <= cap; ++t) {
        const double w = std::exp(count_base_logpmf(t, lp, mu, phi, spec) - logz);
        glp -= w * base_glp(t);
        if (nb) gphi -= w * base_gphi(t);
    }
}

// Gradient of gar1_logpdf with respect to the path and the process parameters.
void gar1_grad(const Eigen::VectorXd& x, const Gar1Hyper& h, Eigen::VectorXd& gx, double& gmean,
               double& grho, double& gsigma) {
    const double s2 = h.sigma * h.sigma;
    const double r1 = x[0] - h.mean;
    gx[0] += -r1 / s2;
    gmean += r1 / s2;
    gsigma += -1.0 / h.sigma + r1 * r1 / (s2 * h.sigma);
    for (Eigen::Index k = 1; k < x.size(); ++k) {
        const double r = x[k] - h.mean * (1.0 - h.rho) - h.rho * x[k - 1];
        gx[k] += -r / s2;
        gx[k - 1] += h.rho * r / s2;
        gmean += r * (1.0 - h.rho) / s2;
        grho += r * (x[k - 1] - h.mean) / s2;
        gsigma += -1.0 / h.sigma + r * r / (s2 * h.sigma);
    }
}

}  // namespace

Params make_zero_params(const ModelSpec& spec) {
    Params params;
    params.beta0 = Eigen::VectorXd::Zero(spec.K);
    params.betaL = Eigen::VectorXd::Zero(spec.p());
    params.theta0 = Eigen::VectorXd::Zero(spec.K);
    params.thetaL = Eigen::VectorXd::Zero(spec.p());
    return params;
}

double hazard(int k, int a, long y_lag, const Eigen::VectorXd& l, const Params& params,
              const ModelSpec& spec) {
    check_k(k, spec.K);
    check_design(l, params.betaL);
    const double lp = params.beta0[k - 1] + l.dot(params.betaL) +
                      lag_value(y_lag, spec) * params.betaY + a * params.betaA;
    return clamp_probability(expit(lp));
}

double count_mean(int k, int a, long y_lag, const Eigen::VectorXd& l, const Params& params,
                  const ModelSpec& spec) {
    check_k(k, spec.K);
    check_design(l, params.thetaL);
    const double lp = params.theta0[k - 1] + l.dot(params.thetaL) +
                      lag_value(y_lag, spec) * params.thetaY + a * params.thetaA;
    return clamp_mean(std::exp(lp));
}

double gar1_logpdf(const Eigen::VectorXd& x, double eta, double rho, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("gar1 sigma must be positive");
    if (x.size() == 0) return 0.0;
    double lp = normal_logpdf(x[0], eta, sigma);
    for (Eigen::Index k = 1; k < x.size(); ++k)
        lp += normal_logpdf(x[k], eta * (1.0 - rho) + rho * x[k - 1], sigma);
    return lp;
}

double count_logpmf(long y, double mu, const Params& params, const ModelSpec& spec) {
    if (!(mu > 0.0)) return y == 0 ? 0.0 : kNegInf;
    return count_term(y, std::log(mu), mu, params, spec);
}

std::vector<double> truncated_count_pmf(double mu, const Params& params, const ModelSpec& spec,
                                        long cap) {
    if (cap < 0) throw ConfigError("count cap must be nonnegative");
    const double lp = std::log(mu);
    const double logz = log_trunc_norm(lp, mu, params.dispersion, cap, spec);
    std::vector<double> pmf(static_cast<std::size_t>(cap) + 1);
    for (long t = 0; t <= cap; ++t)
        pmf[static_cast<std::size_t>(t)] =
            std::exp(count_base_logpmf(t, lp, mu, params.dispersion, spec) - logz);
    return pmf;
}

long draw_count(RngStream& rng, double mu, const Params& params, const ModelSpec& spec) {
    if (spec.count_cap) {
        const auto pmf = truncated_count_pmf(mu, params, spec, *spec.count_cap);
        return rng.discrete(pmf);
    }
    return spec.count_family == CountFamily::poisson ? rng.poisson(mu)
                                                     : rng.negbin(mu, params.dispersion);
}

double death_loglik(const PanelGrid& panel, const Params& params, const ModelSpec& spec) {
    check_dims(panel, params, spec);
    double ll = 0.0;
    for (std::size_t i = 0; i < panel.n(); ++i) {
        const SubjectPanel& s = panel.subjects[i];
        const double dot = panel.covariates.row(static_cast<Eigen::Index>(i)).dot(params.betaL);
        for (const PanelRow& row : s.rows) {
            if (row.k < 2) continue;
            const double lp = params.beta0[row.k - 1] + dot +
                              lag_value(s.y_lag(row.k), spec) * params.betaY +
                              s.a_lag(row.k) * params.betaA;
            ll -= softplus(lp);  // log(1 - hazard)
        }
        if (s.exit == ExitKind::death && s.exit_interval >= 2) {
            const int d = s.exit_interval;
            const double lp = params.beta0[d - 1] + dot +
                              lag_value(s.y_lag(d), spec) * params.betaY +
                              s.a_lag(d) * params.betaA;
            ll -= softplus(-lp);  // log(hazard)
        }
    }
    return ll;
}

double count_loglik(const PanelGrid& panel, const Params& params, const ModelSpec& spec) {
    check_dims(panel, params, spec);
    double ll = 0.0;
    for (std::size_t i = 0; i < panel.n(); ++i) {
        const SubjectPanel& s = panel.subjects[i];
        const double dot = panel.covariates.row(static_cast<Eigen::Index>(i)).dot(params.thetaL);
        for (const PanelRow& row : s.rows) {
            const double lp = params.theta0[row.k - 1] + dot +
                              lag_value(s.y_lag(row.k), spec) * params.thetaY + row.a * params.thetaA;
            ll += count_term(row.y, lp, std::exp(lp), params, spec);
        }
    }
    return ll;
}

double log_likelihood(const PanelGrid& panel, const Params& params, const ModelSpec& spec) {
    return death_loglik(panel, params, spec) + count_loglik(panel, params, spec);
}

double beta_side_log_prior(const Params& params, const ModelSpec& spec) {
    const Gar1Hyper& h = params.beta_h;
    if (!(std::abs(h.rho) < 1.0) || !(h.sigma > 0.0) || !(h.sigma <= spec.sigma_max)) return kNegInf;
    double lp = gar1_logpdf(params.beta0, h.mean, h.rho, h.sigma);
    lp += normal_logpdf(h.mean, 0.0, spec.hyper_mean_sd);
    lp += -std::log(2.0);             // rho uniform on (-1, 1)
    lp += -std::log(spec.sigma_max);  // sigma flat on (0, sigma_max]
    for (Eigen::Index j = 0; j < params.betaL.size(); ++j)
        lp += normal_logpdf(params.betaL[j], 0.0, spec.coef_prior_sd);
    lp += normal_logpdf(params.betaY, 0.0, spec.coef_prior_sd);
    lp += normal_logpdf(params.betaA, 0.0, spec.coef_prior_sd);
    return lp;
}

double theta_side_log_prior(const Params& params, const ModelSpec& spec) {
    const Gar1Hyper& h = params.theta_h;
    if (!(std::abs(h.rho) < 1.0) || !(h.sigma > 0.0) || !(h.sigma <= spec.sigma_max)) return kNegInf;
    if (spec.count_family == CountFamily::negative_binomial && !(params.dispersion > 0.0))
        return kNegInf;
    double lp = gar1_logpdf(params.theta0, h.mean, h.rho, h.sigma);
    lp += normal_logpdf(h.mean, 0.0, spec.hyper_mean_sd);
    lp += -std::log(2.0);
    lp += -std::log(spec.sigma_max);
    for (Eigen::Index j = 0; j < params.thetaL.size(); ++j)
        lp += normal_logpdf(params.thetaL[j], 0.0, spec.coef_prior_sd);
    lp += normal_logpdf(params.thetaY, 0.0, spec.coef_prior_sd);
    lp += normal_logpdf(params.thetaA, 0.0, spec.coef_prior_sd);
    if (spec.count_family == CountFamily::negative_binomial)
        lp += normal_logpdf(params.dispersion, 0.0, spec.dispersion_prior_sd) + std::log(2.0);
    return lp;
}

double log_prior(const Params& params, const ModelSpec& spec) {
    const double b = beta_side_log_prior(params, spec);
    if (b == kNegInf) return kNegInf;
    const double t = theta_side_log_prior(params, spec);
    if (t == kNegInf) return kNegInf;
    return b + t;
}

double log_posterior(const PanelGrid& panel, const Params& params, const ModelSpec& spec) {
    const double prior = log_prior(params, spec);
    if (prior == kNegInf) return kNegInf;
    return prior + log_likelihood(panel, params, spec);
}

Eigen::VectorXd grad_log_posterior(const PanelGrid& panel, const Params& params,
                                   const ModelSpec& spec) {
    check_dims(panel, params, spec);
    const ParamLayout L(spec);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(L.dim());
    const double phi = params.dispersion;
    const bool nb = spec.count_family == CountFamily::negative_binomial;

    for (std::size_t i = 0; i < panel.n(); ++i) {
        const SubjectPanel& s = panel.subjects[i];
        const auto li = panel.covariates.row(static_cast<Eigen::Index>(i));
        const double dotB = li.dot(params.betaL);
        const double dotT = li.dot(params.thetaL);

        auto add_death = [&](int k, double a, double lag, double glp) {
            g[L.beta0(k)] += glp;
            for (int j = 0; j < L.p; ++j) g[L.betaL(j)] += glp * li[j];
            g[L.betaY()] += glp * lag;
            g[L.betaA()] += glp * a;
        };

        for (const PanelRow& row : s.rows) {
            const double lag = lag_value(s.y_lag(row.k), spec);
            if (row.k >= 2) {
                const double a_prev = s.a_lag(row.k);
                const double lp =
                    params.beta0[row.k - 1] + dotB + lag * params.betaY + a_prev * params.betaA;
                add_death(row.k, a_prev, lag, -expit(lp));
            }
            const double lpc =
                params.theta0[row.k - 1] + dotT + lag * params.thetaY + row.a * params.thetaA;
            const double mu = std::exp(lpc);
            double glp = 0.0, gphi = 0.0;
            count_grad(row.y, mu, phi, spec, glp, gphi);
            g[L.theta0(row.k)] += glp;
            for (int j = 0; j < L.p; ++j) g[L.thetaL(j)] += glp * li[j];
            g[L.thetaY()] += glp * lag;
            g[L.thetaA()] += glp * row.a;
            if (nb) g[L.dispersion()] += gphi;
        }
        if (s.exit == ExitKind::death && s.exit_interval >= 2) {
            const int d = s.exit_interval;
            const double lag = lag_value(s.y_lag(d), spec);
            const double a_prev = s.a_lag(d);
            const double lp = params.beta0[d - 1] + dotB + lag * params.betaY + a_prev * params.betaA;
            add_death(d, a_prev, lag, 1.0 - expit(lp));
        }
    }

    // Smoothing-process terms for both intercept series.
    {
        Eigen::VectorXd gx = Eigen::VectorXd::Zero(L.K);
        double gm = 0.0, gr = 0.0, gs = 0.0;
        gar1_grad(params.beta0, params.beta_h, gx, gm, gr, gs);
        for (int k = 1; k <= L.K; ++k) g[L.beta0(k)] += gx[k - 1];
        g[L.beta_mean()] += gm - params.beta_h.mean / (spec.hyper_mean_sd * spec.hyper_mean_sd);
        g[L.beta_rho()] += gr;
        g[L.beta_sigma()] += gs;
    }
    {
        Eigen::VectorXd gx = Eigen::VectorXd::Zero(L.K);
        double gm = 0.0, gr = 0.0, gs = 0.0;
        gar1_grad(params.theta0, params.theta_h, gx, gm, gr, gs);
        for (int k = 1; k <= L.K; ++k) g[L.theta0(k)] += gx[k - 1];
        g[L.theta_mean()] += gm - params.theta_h.mean / (spec.hyper_mean_sd * spec.hyper_mean_sd);
        g[L.theta_rho()] += gr;
        g[L.theta_sigma()] += gs;
    }

    const double csd2 = spec.coef_prior_sd * spec.coef_prior_sd;
    for (int j = 0; j < L.p; ++j) {
        g[L.betaL(j)] -= params.betaL[j] / csd2;
        g[L.thetaL(j)] -= params.thetaL[j] / csd2;
    }
    g[L.betaY()] -= params.betaY / csd2;
    g[L.betaA()] -= params.betaA / csd2;
    g[L.thetaY()] -= params.thetaY / csd2;
    g[L.thetaA()] -= params.thetaA / csd2;
    if (nb) g[L.dispersion()] -= phi / (spec.dispersion_prior_sd * spec.dispersion_prior_sd);
    return g;
}

Eigen::VectorXd ParamLayout::flatten(const Params& params) const {
    Eigen::VectorXd v(dim());
    for (int k = 1; k <= K; ++k) v[beta0(k)] = params.beta0[k - 1];
    for (int j = 0; j < p; ++j) v[betaL(j)] = params.betaL[j];
    v[betaY()] = params.betaY;
    v[betaA()] = params.betaA;
    for (int k = 1; k <= K; ++k) v[theta0(k)] = params.theta0[k - 1];
    for (int j = 0; j < p; ++j) v[thetaL(j)] = params.thetaL[j];
    v[thetaY()] = params.thetaY;
    v[thetaA()] = params.thetaA;
    v[beta_mean()] = params.beta_h.mean;
    v[beta_rho()] = params.beta_h.rho;
    v[beta_sigma()] = params.beta_h.sigma;
    v[theta_mean()] = params.theta_h.mean;
    v[theta_rho()] = params.theta_h.rho;
    v[theta_sigma()] = params.theta_h.sigma;
    if (has_dispersion) v[dispersion()] = params.dispersion;
    return v;
}

Params ParamLayout::unflatten(const Eigen::VectorXd& v) const {
    if (v.size() != dim()) throw ConfigError("flattened parameter vector has wrong length");
    Params params;
    params.beta0.resize(K);
    params.betaL.resize(p);
    params.theta0.resize(K);
    params.thetaL.resize(p);
    for (int k = 1; k <= K; ++k) params.beta0[k - 1] = v[beta0(k)];
    for (int j = 0; j < p; ++j) params.betaL[j] = v[betaL(j)];
    params.betaY = v[betaY()];
    params.betaA = v[betaA()];
    for (int k = 1; k <= K; ++k) params.theta0[k - 1] = v[theta0(k)];
    for (int j = 0; j < p; ++j) params.thetaL[j] = v[thetaL(j)];
    params.thetaY = v[thetaY()];
    params.thetaA = v[thetaA()];
    params.beta_h = {v[beta_mean()], v[beta_rho()], v[beta_sigma()]};
    params.theta_h = {v[theta_mean()], v[theta_rho()], v[theta_sigma()]};
    if (has_dispersion) params.dispersion = v[dispersion()];
    return params;
}

std::vector<std::string> ParamLayout::names(const std::vector<std::string>& covariate_names) const {
    if (static_cast<int>(covariate_names.size()) != p)
        throw ConfigError("covariate name count does not match layout");
    std::vector<std::string> out(static_cast<std::size_t>(dim()));
    for (int k = 1; k <= K; ++k) out[static_cast<std::size_t>(beta0(k))] = "beta0[" + std::to_string(k) + "]";
    for (int j = 0; j < p; ++j) out[static_cast<std::size_t>(betaL(j))] = "betaL[" + covariate_names[static_cast<std::size_t>(j)] + "]";
    out[static_cast<std::size_t>(betaY())] = "betaY";
    out[static_cast<std::size_t>(betaA())] = "betaA";
    for (int k = 1; k <= K; ++k) out[static_cast<std::size_t>(theta0(k))] = "theta0[" + std::to_string(k) + "]";
    for (int j = 0; j < p; ++j) out[static_cast<std::size_t>(thetaL(j))] = "thetaL[" + covariate_names[static_cast<std::size_t>(j)] + "]";
    out[static_cast<std::size_t>(thetaY())] = "thetaY";
    out[static_cast<std::size_t>(thetaA())] = "thetaA";
    out[static_cast<std::size_t>(beta_mean())] = "beta_gar1_mean";
    out[static_cast<std::size_t>(beta_rho())] = "beta_gar1_rho";
    out[static_cast<std::size_t>(beta_sigma())] = "beta_gar1_sigma";
    out[static_cast<std::size_t>(theta_mean())] = "theta_gar1_mean";
    out[static_cast<std::size_t>(theta_rho())] = "theta_gar1_rho";
    out[static_cast<std::size_t>(theta_sigma())] = "theta_gar1_sigma";
    if (has_dispersion) out[static_cast<std::size_t>(dispersion())] = "dispersion";
    return out;
}

}  // namespace recurate
