// G-computation machinery: regime algebra, bootstrap weights, exact
// enumeration against hand oracles, and simulation against enumeration.
#include <doctest.h>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "recurate/errors.hpp"
#include "recurate/gcomp.hpp"
#include "recurate/model.hpp"
#include "recurate/rng.hpp"

using namespace recurate;

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ModelSpec capped_spec(int K, long cap) {
    ModelSpec spec;
    spec.K = K;
    spec.covariate_names = {"x"};
    spec.count_family = CountFamily::poisson;
    spec.lag_transform = LagTransform::raw_count;
    spec.count_cap = cap;
    return spec;
}

Params toy_params(const ModelSpec& spec) {
    Params p = make_zero_params(spec);
    for (int k = 0; k < spec.K; ++k) {
        p.beta0[k] = -1.2 - 0.1 * k;
        p.theta0[k] = 0.2 - 0.05 * k;
    }
    p.betaL << 0.25;
    p.thetaL << 0.4;
    p.betaY = 0.3;
    p.betaA = -0.5;
    p.thetaY = 0.2;
    p.thetaA = -0.35;
    return p;
}

}  // namespace

TEST_CASE("regime treatment switches on at interval s and regime bounds are enforced") {
    const Regime r = make_regime(3, 5);
    CHECK(r.treatment(1) == 0);
    CHECK(r.treatment(2) == 0);
    CHECK(r.treatment(3) == 1);
    CHECK(r.treatment(5) == 1);
    const Regime never = make_regime(6, 5);
    for (int k = 1; k <= 5; ++k) CHECK(never.treatment(k) == 0);
    CHECK_THROWS_AS(make_regime(0, 5), ConfigError);
    CHECK_THROWS_AS(make_regime(7, 5), ConfigError);
}

TEST_CASE("bootstrap weights are a flat Dirichlet: positive, normalized, right moments") {
    const std::size_t n = 5;
    const int reps = 20000;
    RngStream rng(404);
    std::vector<double> mean(n, 0.0);
    std::vector<double> m2(n, 0.0);
    for (int r = 0; r < reps; ++r) {
        const Eigen::VectorXd w = bayesian_bootstrap_weights(n, rng);
        REQUIRE(w.size() == static_cast<Eigen::Index>(n));
        CHECK(std::abs(w.sum() - 1.0) < 1e-12);
        CHECK(w.minCoeff() > 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            mean[j] += w[static_cast<Eigen::Index>(j)];
            m2[j] += w[static_cast<Eigen::Index>(j)] * w[static_cast<Eigen::Index>(j)];
        }
    }
    // Flat Dirichlet on 5 atoms: mean 1/5, variance (1/5)(4/5)/6.
    const double want_var = 0.2 * 0.8 / 6.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double m = mean[j] / reps;
        const double v = m2[j] / reps - m * m;
        CHECK(std::abs(m - 0.2) < 0.005);
        CHECK(std::abs(v - want_var) / want_var < 0.15);
    }
}

TEST_CASE("two-interval exact enumeration matches a hand-computed expected rate") {
    const ModelSpec spec = capped_spec(2, 1);
    const Params params = toy_params(spec);
    Eigen::VectorXd l(1);
    l << 0.8;

    const Regime treat_now = make_regime(1, 2);
    const std::vector<OutcomePath> pmf = gformula_pmf(params, spec, treat_now, l);

    // Paths: y1 in {0,1} x {death entering 2, survive with y2 in {0,1}}.
    REQUIRE(pmf.size() == 6);
    double total = 0.0;
    for (const auto& path : pmf) total += path.prob;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    // Hand oracle. Counts under treatment from interval 1; the transition into
    // interval 2 conditions on treatment by the end of interval 1 (a = 1).
    const double mu1 = std::exp(0.2 + 0.4 * 0.8 + (-0.35));
    auto q1 = [&](long y) { return y == 0 ? 1.0 / (1.0 + mu1) : mu1 / (1.0 + mu1); };
    double expected_rate = 0.0;
    for (long y1 = 0; y1 <= 1; ++y1) {
        const double lam = expit(-1.3 + 0.25 * 0.8 + 0.3 * y1 + (-0.5));
        const double mu2 = std::exp(0.15 + 0.4 * 0.8 + 0.2 * y1 + (-0.35));
        auto q2 = [&](long y) { return y == 0 ? 1.0 / (1.0 + mu2) : mu2 / (1.0 + mu2); };
        double survive_mean = 0.0;
        for (long y2 = 0; y2 <= 1; ++y2) survive_mean += q2(y2) * (y1 + y2) / 2.0;
        expected_rate += q1(y1) * (lam * y1 + (1.0 - lam) * survive_mean);
    }
    CHECK(gformula_expected_rate(pmf) == doctest::Approx(expected_rate).epsilon(1e-12));

    // Same machinery, never-treat regime: flipping the treatment sign in the
    // oracle is all that changes.
    const std::vector<OutcomePath> pmf0 = gformula_pmf(params, spec, make_regime(3, 2), l);
    const double mu1_0 = std::exp(0.2 + 0.4 * 0.8);
    auto q1_0 = [&](long y) { return y == 0 ? 1.0 / (1.0 + mu1_0) : mu1_0 / (1.0 + mu1_0); };
    double rate0 = 0.0;
    for (long y1 = 0; y1 <= 1; ++y1) {
        const double lam = expit(-1.3 + 0.25 * 0.8 + 0.3 * y1);
        const double mu2 = std::exp(0.15 + 0.4 * 0.8 + 0.2 * y1);
        auto q2 = [&](long y) { return y == 0 ? 1.0 / (1.0 + mu2) : mu2 / (1.0 + mu2); };
        double survive_mean = 0.0;
        for (long y2 = 0; y2 <= 1; ++y2) survive_mean += q2(y2) * (y1 + y2) / 2.0;
        rate0 += q1_0(y1) * (lam * y1 + (1.0 - lam) * survive_mean);
    }
    CHECK(gformula_expected_rate(pmf0) == doctest::Approx(rate0).epsilon(1e-12));
    CHECK(gformula_psi(params, spec, 1, 3, l) ==
          doctest::Approx(expected_rate - rate0).epsilon(1e-12));
}

TEST_CASE("a switch mid-grid changes the death transition one interval late") {
    // With s = 2 the subject is treated from interval 2 on, but the transition
    // into interval 2 still conditions on untreated status (nothing was
    // switched by the end of interval 1). The enumeration's survival factor
    // into interval 2 must therefore carry no treatment term.
    const ModelSpec spec = capped_spec(2, 1);
    Params params = toy_params(spec);
    Eigen::VectorXd l(1);
    l << -0.4;

    Params no_death_effect = params;
    no_death_effect.betaA = 0.0;
    // Counts depend on thetaA either way; keep those identical and verify the
    // death side is insensitive to betaA under s = 2 at K = 2 (the only death
    // transition happens entering interval 2).
    const std::vector<OutcomePath> a = gformula_pmf(params, spec, make_regime(2, 2), l);
    const std::vector<OutcomePath> b = gformula_pmf(no_death_effect, spec, make_regime(2, 2), l);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].prob == doctest::Approx(b[i].prob).epsilon(1e-12));
        CHECK(a[i].rate == doctest::Approx(b[i].rate).epsilon(1e-12));
    }
}

TEST_CASE("simulated trajectories reproduce the enumerated path law") {
    const ModelSpec spec = capped_spec(3, 2);
    const Params params = toy_params(spec);
    Eigen::VectorXd l(1);
    l << 0.3;
    const Regime regime = make_regime(2, 3);

    const std::vector<OutcomePath> pmf = gformula_pmf(params, spec, regime, l);
    std::map<std::string, double> exact;
    for (const auto& path : pmf) {
        std::string key = std::to_string(path.death_interval) + ":";
        for (int k = 0; k < path.intervals_alive; ++k) key += std::to_string(path.y[k]) + ",";
        exact[key] += path.prob;
    }

    const int reps = 150000;
    RngStream rng(2024);
    std::map<std::string, long> counts;
    for (int r = 0; r < reps; ++r) {
        const Trajectory tr = simulate_trajectory(l, regime, params, spec, rng);
        const int death_interval = tr.intervals_alive < 3 ? tr.intervals_alive + 1 : 4;
        std::string key = std::to_string(death_interval) + ":";
        for (int k = 0; k < tr.intervals_alive; ++k) key += std::to_string(tr.y[k]) + ",";
        ++counts[key];
    }

    long matched = 0;
    for (const auto& [key, prob] : exact) {
        const double freq = static_cast<double>(counts[key]) / reps;
        const double se = std::sqrt(std::max(prob * (1.0 - prob), 1e-12) / reps);
        CHECK(std::abs(freq - prob) < 5.0 * se + 1e-6);
        matched += counts[key];
    }
    CHECK(matched == reps);  // nothing simulated outside the enumerated support
}

TEST_CASE("identical switch times give an exactly zero contrast") {
    const ModelSpec spec = capped_spec(4, 3);
    const Params params = toy_params(spec);
    RngStream rng(88);
    Eigen::MatrixXd cov(6, 1);
    for (int i = 0; i < 6; ++i) cov(i, 0) = rng.normal();
    for (int s : {1, 3, 5}) {
        RngStream wrng(9000 + s);
        const Eigen::VectorXd w = bayesian_bootstrap_weights(6, wrng);
        const RngStream traj(77);
        CHECK(psi_draw(s, s, params, w, cov, spec, 40, traj) == 0.0);
    }
}

TEST_CASE("conditional rate is the average of the documented per-replicate streams") {
    const ModelSpec spec = capped_spec(3, 2);
    const Params params = toy_params(spec);
    Eigen::VectorXd l(1);
    l << -0.9;
    const Regime regime = make_regime(2, 3);
    const RngStream stream(314159);
    const int B = 60;

    double manual = 0.0;
    for (int b = 0; b < B; ++b) {
        RngStream rb = stream.fold(static_cast<std::uint64_t>(b))
                           .fold(static_cast<std::uint64_t>(regime.s));
        const Trajectory tr = simulate_trajectory(l, regime, params, spec, rb);
        manual += static_cast<double>(tr.total_events) / tr.intervals_alive;
    }
    manual /= B;
    CHECK(conditional_rate(l, regime, params, spec, B, stream) ==
          doctest::Approx(manual).epsilon(1e-15));
}
