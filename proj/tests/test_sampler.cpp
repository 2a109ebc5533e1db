// Sampler machinery: convergence statistics on chains with known dependence,
// the generic adaptive random-walk kernel on an analytic target, and agreement
// between the two posterior kernels on a real panel.
#include <doctest.h>

#include <cmath>
#include <vector>

#include "recurate/rng.hpp"
#include "recurate/sampler.hpp"
#include "recurate/synth.hpp"

using namespace recurate;

TEST_CASE("effective sample size recovers the autocorrelation discount of an AR(1) chain") {
    const int per_chain = 3000, chains = 2;
    Eigen::MatrixXd draws(per_chain * chains, 2);
    RngStream rng(1717);
    const double phi = 0.9;
    for (int c = 0; c < chains; ++c) {
        double state = 0.0;
        for (int i = 0; i < per_chain; ++i) {
            draws(c * per_chain + i, 0) = rng.normal();
            state = phi * state + std::sqrt(1.0 - phi * phi) * rng.normal();
            draws(c * per_chain + i, 1) = state;
        }
    }
    const std::vector<double> ess = effective_sample_size(draws, chains);
    const std::vector<double> rhat = split_rhat(draws, chains);
    const double total = per_chain * chains;
    CHECK(ess[0] > 0.6 * total);
    CHECK(ess[0] < 1.4 * total);
    // Stationary AR(1): ESS ~ N (1 - phi) / (1 + phi) ~ N / 19.
    CHECK(ess[1] > total / 19.0 / 2.5);
    CHECK(ess[1] < total / 19.0 * 2.5);
    CHECK(rhat[0] < 1.02);
    CHECK(rhat[1] < 1.05);
}

TEST_CASE("split R-hat flags chains stuck in different places") {
    const int per_chain = 1000, chains = 2;
    Eigen::MatrixXd draws(per_chain * chains, 1);
    RngStream rng(88);
    for (int i = 0; i < per_chain; ++i) draws(i, 0) = rng.normal();
    for (int i = 0; i < per_chain; ++i) draws(per_chain + i, 0) = 2.0 + rng.normal();
    CHECK(split_rhat(draws, chains)[0] > 1.5);
}

TEST_CASE("adaptive random-walk kernel reproduces a correlated Gaussian target") {
    const Eigen::Vector2d mean(1.0, -2.0);
    const double rho = 0.8;
    // Precision of unit-variance pair with correlation rho.
    const double d = 1.0 / (1.0 - rho * rho);
    auto logpdf = [&](const Eigen::VectorXd& x) {
        const double u = x[0] - mean[0], v = x[1] - mean[1];
        return -0.5 * d * (u * u - 2.0 * rho * u * v + v * v);
    };
    RngStream rng(2718);
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
    double accept = 0.0;
    const Eigen::MatrixXd draws =
        adaptive_metropolis_sample(logpdf, x0, 4000, 8000, rng, 0.234, &accept);
    REQUIRE(draws.rows() == 8000);
    CHECK(accept > 0.1);
    CHECK(accept < 0.5);

    Eigen::Vector2d m = draws.colwise().mean();
    Eigen::MatrixXd centered = draws.rowwise() - m.transpose();
    Eigen::Matrix2d cov = centered.transpose() * centered / (draws.rows() - 1.0);
    CHECK(std::abs(m[0] - 1.0) < 0.1);
    CHECK(std::abs(m[1] + 2.0) < 0.1);
    CHECK(std::abs(cov(0, 0) - 1.0) < 0.2);
    CHECK(std::abs(cov(1, 1) - 1.0) < 0.2);
    CHECK(std::abs(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)) - rho) < 0.12);
}

TEST_CASE("both posterior kernels land on the same posterior") {
    DgpConfig dgp = setting1_config();
    dgp.n = 150;
    const CohortData cohort = generate_dataset(dgp, 12);
    const PanelGrid panel = discretize(cohort, dgp.K, dgp.tau);
    ModelSpec spec;
    spec.K = panel.K;
    spec.covariate_names = panel.covariate_names;
    spec.lag_transform = LagTransform::positive_indicator;

    McmcConfig amh;
    amh.chains = 2;
    amh.warmup = 2000;
    amh.retained = 400;
    amh.thin = 40;
    amh.seed = 5;
    amh.algorithm = Algorithm::adaptive_metropolis;
    const PosteriorDraws da = sample_posterior(panel, spec, amh);

    McmcConfig hmc;
    hmc.chains = 2;
    hmc.warmup = 800;
    hmc.retained = 400;
    hmc.thin = 3;
    hmc.seed = 5;
    hmc.algorithm = Algorithm::hmc;
    hmc.hmc_leapfrog_steps = 12;
    const PosteriorDraws dh = sample_posterior(panel, spec, hmc);

    const ParamLayout layout(spec);
    for (int idx : {layout.thetaA(), layout.thetaY(), layout.theta0(3)}) {
        const auto stats = [&](const PosteriorDraws& d) {
            const double m = d.draws.col(idx).mean();
            const double sd = std::sqrt(
                (d.draws.col(idx).array() - m).square().sum() / (d.draws.rows() - 1.0));
            return std::pair<double, double>(m, sd);
        };
        const auto [ma, sa] = stats(da);
        const auto [mh, sh] = stats(dh);
        const double pooled = 0.5 * (sa + sh);
        CHECK(std::abs(ma - mh) < 0.6 * pooled + 0.03);
        CHECK(sa / sh < 2.0);
        CHECK(sh / sa < 2.0);
    }
}

TEST_CASE("sampler configuration is validated") {
    DgpConfig dgp = setting1_config();
    dgp.n = 30;
    const CohortData cohort = generate_dataset(dgp, 2);
    const PanelGrid panel = discretize(cohort, dgp.K, dgp.tau);
    ModelSpec spec;
    spec.K = panel.K;
    spec.covariate_names = panel.covariate_names;

    McmcConfig bad;
    bad.chains = 1;
    CHECK_THROWS(sample_posterior(panel, spec, bad));
    bad = McmcConfig{};
    bad.thin = 0;
    CHECK_THROWS(sample_posterior(panel, spec, bad));
    bad = McmcConfig{};
    bad.retained = 30;
    CHECK_THROWS(sample_posterior(panel, spec, bad));

    // An awkward retained/chains split rounds up per chain instead of crashing.
    McmcConfig odd;
    odd.chains = 3;
    odd.warmup = 60;
    odd.retained = 101;
    odd.thin = 1;
    const PosteriorDraws d = sample_posterior(panel, spec, odd);
    CHECK(d.per_chain == 34);
    CHECK(d.draws.rows() == 3 * 34);
}
