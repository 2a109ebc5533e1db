// Acceptance gate: one binary, eight numbered criteria, each printing a single
// PASS/FAIL line plus supporting detail. Exit status 0 iff the requested
// criterion passes. Criterion 5 is the hours-scale operating-characteristics
// study; it checkpoints per-replication results so reruns are cheap.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "recurate/cohort.hpp"
#include "recurate/comparators.hpp"
#include "recurate/csv.hpp"
#include "recurate/errors.hpp"
#include "recurate/gcomp.hpp"
#include "recurate/model.hpp"
#include "recurate/rng.hpp"
#include "recurate/sampler.hpp"
#include "recurate/stats.hpp"
#include "recurate/synth.hpp"

using namespace recurate;
namespace fs = std::filesystem;

namespace {

struct Check {
    std::string name;
    bool ok = false;
    std::string detail;
};

class Criterion {
  public:
    void check(const std::string& name, bool ok, const std::string& detail) {
        checks_.push_back({name, ok, detail});
        std::cout << "  [" << (ok ? "ok" : "FAIL") << "] " << name << ": " << detail << "\n";
    }
    bool all_ok() const {
        for (const Check& c : checks_)
            if (!c.ok) return false;
        return true;
    }

  private:
    std::vector<Check> checks_;
};

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// Criterion 1: Monte Carlo g-computation agrees with exact enumeration on
// small capped instances, within 3 Monte Carlo standard errors per regime.
// ---------------------------------------------------------------------------

Params random_small_params(const ModelSpec& spec, RngStream& rng) {
    Params p = make_zero_params(spec);
    for (int k = 0; k < spec.K; ++k) {
        p.beta0[k] = -1.5 + 0.6 * rng.normal();
        p.theta0[k] = -0.4 + 0.5 * rng.normal();
    }
    for (int j = 0; j < spec.p(); ++j) {
        p.betaL[j] = 0.5 * rng.normal();
        p.thetaL[j] = 0.5 * rng.normal();
    }
    p.betaY = 0.4 * rng.normal();
    p.betaA = 0.5 * rng.normal();
    p.thetaY = 0.3 * rng.normal();
    p.thetaA = 0.5 * rng.normal();
    p.dispersion = 1.0 + 2.0 * rng.uniform();
    return p;
}

bool criterion1() {
    Criterion crit;
    const int B = 100000;
    ModelSpec spec;
    spec.K = 3;
    spec.covariate_names = {"b"};
    spec.count_cap = 3;
    RngStream root(20260101);
    int worst_instance = -1;
    double worst_z = 0.0;
    bool all_ok = true;
    for (int inst = 0; inst < 20; ++inst) {
        RngStream rng = root.fold(inst + 1);
        spec.count_family = inst % 2 == 0 ? CountFamily::poisson : CountFamily::negative_binomial;
        const Params params = random_small_params(spec, rng);
        Eigen::VectorXd l(1);
        l[0] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        for (int s = 1; s <= spec.K + 1; ++s) {
            const Regime regime = make_regime(s, spec.K);
            const double exact = gformula_expected_rate(gformula_pmf(params, spec, regime, l));
            RunningMoments mc;
            RngStream sim = rng.fold(100 + s);
            for (int b = 0; b < B; ++b) {
                RngStream br = sim.fold(b);
                mc.add(simulate_trajectory(l, regime, params, spec, br).rate());
            }
            const double se = std::sqrt(mc.variance() / B);
            const double z = std::abs(mc.mean - exact) / (se > 0 ? se : 1e-300);
            if (z > worst_z) {
                worst_z = z;
                worst_instance = inst;
            }
            if (z > 3.0) all_ok = false;
        }
    }
    crit.check("mc matches enumeration", all_ok,
               "20 instances x 4 regimes, B=100000; worst |z| = " + fmt(worst_z) +
                   " (instance " + std::to_string(worst_instance) + "), threshold 3");
    return crit.all_ok();
}

// ---------------------------------------------------------------------------
// Criterion 2: structural invariants over one million simulated trajectories.
// ---------------------------------------------------------------------------

bool criterion2() {
    Criterion crit;
    ModelSpec spec;
    spec.K = 12;
    spec.covariate_names = {"x1", "x2"};
    RngStream root(20260202);
    long violations = 0;
    const long total = 1000000;
    Params params;
    ModelSpec cur = spec;
    for (long i = 0; i < total; ++i) {
        if (i % 1000 == 0) {
            RngStream prng = root.fold(1).fold(i / 1000);
            cur.count_family =
                (i / 1000) % 2 == 0 ? CountFamily::poisson : CountFamily::negative_binomial;
            params = random_small_params(cur, prng);
        }
        RngStream rng = root.fold(2).fold(i);
        Eigen::VectorXd l(2);
        l[0] = rng.normal();
        l[1] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        const int s = 1 + static_cast<int>(rng.uniform() * (cur.K + 1));
        const Regime regime = make_regime(std::min(s, cur.K + 1), cur.K);
        const Trajectory tr = simulate_trajectory(l, regime, params, cur, rng);
        bool ok = static_cast<int>(tr.t.size()) == cur.K &&
                  static_cast<int>(tr.y.size()) == cur.K && tr.t[0] == 0;
        long events = 0;
        int dead = 0, t_sum = 0;
        int prev_a = 0;
        for (int k = 1; k <= cur.K && ok; ++k) {
            const int tk = tr.t[k - 1];
            if (tk < dead) ok = false;       // death is absorbing
            if (tk == 1 && tr.y[k - 1] != 0) ok = false;
            if (tr.y[k - 1] < 0) ok = false;
            const int a = regime.treatment(k);
            if (a < prev_a) ok = false;      // regime is monotone
            prev_a = a;
            dead = tk;
            t_sum += tk;
            events += tr.y[k - 1];
        }
        if (ok) {
            if (tr.intervals_alive != cur.K - t_sum || tr.intervals_alive < 1) ok = false;
            if (tr.total_events != events) ok = false;
            if (!std::isfinite(tr.rate())) ok = false;
        }
        if (!ok) ++violations;
    }
    crit.check("trajectory invariants", violations == 0,
               std::to_string(total) + " trajectories, " + std::to_string(violations) +
                   " violations");
    return crit.all_ok();
}

// ---------------------------------------------------------------------------
// Criterion 3: sampled smoothing-process paths reproduce the documented prior
// law: x_1 ~ N(eta, sigma^2), x_k = eta(1-rho) + rho x_{k-1} + sigma eps.
// ---------------------------------------------------------------------------

bool criterion3() {
    Criterion crit;
    const int K = 20, paths = 100000;
    const double eta = 0.8, rho = 0.6, sigma = 1.3;
    std::vector<std::vector<double>> x(K, std::vector<double>(paths));
    RngStream root(20260303);
    for (int i = 0; i < paths; ++i) {
        RngStream rng = root.fold(i);
        double prev = eta + sigma * rng.normal();
        x[0][i] = prev;
        for (int k = 1; k < K; ++k) {
            prev = eta * (1.0 - rho) + rho * prev + sigma * rng.normal();
            x[k][i] = prev;
        }
    }
    double worst_mean_err = 0.0;
    for (int k = 0; k < K; ++k) {
        double m = 0.0;
        for (double v : x[k]) m += v;
        m /= paths;
        worst_mean_err = std::max(worst_mean_err, std::abs(m - eta));
    }
    crit.check("marginal means", worst_mean_err < 0.01 * sigma,
               "max |mean - eta| = " + fmt(worst_mean_err) + ", bound " + fmt(0.01 * sigma));
    double worst_slope_err = 0.0;
    for (int k = 10; k < K; ++k) {
        double sxy = 0.0, sxx = 0.0;
        for (int i = 0; i < paths; ++i) {
            const double a = x[k - 1][i] - eta;
            const double b = x[k][i] - eta;
            sxy += a * b;
            sxx += a * a;
        }
        worst_slope_err = std::max(worst_slope_err, std::abs(sxy / sxx - rho));
    }
    crit.check("lag-1 slope", worst_slope_err < 0.02,
               "max |slope - rho| over k >= 10: " + fmt(worst_slope_err) + ", bound 0.02");

    // The in-model density must agree with the law the paths were drawn from:
    // compare the analytic conditional moments against the density's curvature
    // via a direct chain-rule evaluation on one path.
    Eigen::VectorXd path(5);
    path << 0.3, 0.9, 1.4, 0.7, 1.1;
    double manual = normal_logpdf(path[0], eta, sigma);
    for (int k = 1; k < 5; ++k)
        manual += normal_logpdf(path[k], eta * (1.0 - rho) + rho * path[k - 1], sigma);
    const double lib = gar1_logpdf(path, eta, rho, sigma);
    crit.check("density matches sampled law", std::abs(lib - manual) < 1e-10,
               "|density - chain rule| = " + fmt(std::abs(lib - manual)));
    return crit.all_ok();
}

// ---------------------------------------------------------------------------
// Criterion 4: simulation-based calibration on a reduced model, plus a
// finite-difference check of the posterior gradient.
// ---------------------------------------------------------------------------

Params sample_prior(const ModelSpec& spec, RngStream& rng) {
    Params p = make_zero_params(spec);
    auto draw_side = [&](Gar1Hyper& h, Eigen::VectorXd& path) {
        h.mean = spec.hyper_mean_sd * rng.normal();
        h.rho = rng.uniform(-1.0, 1.0);
        h.sigma = spec.sigma_max * rng.uniform_pos();
        double prev = h.mean + h.sigma * rng.normal();
        path[0] = prev;
        for (int k = 1; k < spec.K; ++k) {
            prev = h.mean * (1.0 - h.rho) + h.rho * prev + h.sigma * rng.normal();
            path[k] = prev;
        }
    };
    draw_side(p.beta_h, p.beta0);
    draw_side(p.theta_h, p.theta0);
    for (int j = 0; j < spec.p(); ++j) {
        p.betaL[j] = spec.coef_prior_sd * rng.normal();
        p.thetaL[j] = spec.coef_prior_sd * rng.normal();
    }
    p.betaY = spec.coef_prior_sd * rng.normal();
    p.betaA = spec.coef_prior_sd * rng.normal();
    p.thetaY = spec.coef_prior_sd * rng.normal();
    p.thetaA = spec.coef_prior_sd * rng.normal();
    if (spec.count_family == CountFamily::negative_binomial)
        p.dispersion = std::abs(spec.dispersion_prior_sd * rng.normal());
    return p;
}

// Assemble a panel directly from the model's own trajectory law (no censoring).
PanelGrid panel_from_model(const ModelSpec& spec, const Params& params, long n, RngStream& rng) {
    PanelGrid grid;
    grid.K = spec.K;
    grid.tau = spec.K;
    grid.covariate_names = spec.covariate_names;
    grid.covariates.resize(n, spec.p());
    for (long i = 0; i < n; ++i) {
        Eigen::VectorXd l(spec.p());
        l[0] = rng.normal();
        if (spec.p() > 1) l[1] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        for (int j = 2; j < spec.p(); ++j) l[j] = rng.normal();
        grid.covariates.row(i) = l;
        const int s = 1 + static_cast<int>(rng.uniform() * (spec.K + 1));
        const Regime regime = make_regime(std::min(s, spec.K + 1), spec.K);
        const Trajectory tr = simulate_trajectory(l, regime, params, spec, rng);
        SubjectPanel sp;
        sp.id = "m" + std::to_string(i);
        int death_k = spec.K + 1;
        for (int k = 1; k <= spec.K; ++k) {
            if (tr.t[k - 1] == 1) {
                death_k = k;
                break;
            }
        }
        for (int k = 1; k < death_k && k <= spec.K; ++k)
            sp.rows.push_back({k, regime.treatment(k), tr.y[k - 1]});
        if (death_k <= spec.K) {
            sp.exit = ExitKind::death;
            sp.exit_interval = death_k;
            sp.exit_a = regime.treatment(death_k);
        }
        grid.subjects.push_back(std::move(sp));
    }
    return grid;
}

bool criterion4() {
    Criterion crit;
    ModelSpec spec;
    spec.K = 5;
    spec.covariate_names = {"x1", "x2"};
    spec.count_family = CountFamily::poisson;
    // Tame smoothing hyperpriors keep the prior-predictive datasets in a range
    // the sampler can traverse; calibration is still a sharp correctness check.
    spec.coef_prior_sd = 0.5;
    spec.hyper_mean_sd = 0.7;
    spec.sigma_max = 0.4;

    const int reps = 200, n = 200, thin = 15, kept = 99;
    const ParamLayout layout(spec);
    const int dim = layout.dim();
    std::vector<std::vector<int>> ranks(dim);
    RngStream root(20260404);
    int fits_failed = 0;
    for (int r = 0; r < reps; ++r) {
        RngStream rep_rng = root.fold(1).fold(r);
        const Params truth = sample_prior(spec, rep_rng);
        PanelGrid panel = panel_from_model(spec, truth, n, rep_rng);
        McmcConfig mc;
        mc.chains = 2;
        mc.warmup = 800;
        mc.retained = 2 * (thin * kept / 2 + 60);  // room to thin
        mc.seed = root.fold(2).fold(r).next_u64();
        PosteriorDraws draws;
        try {
            draws = sample_posterior(panel, spec, mc);
        } catch (const std::exception&) {
            ++fits_failed;
            continue;
        }
        const Eigen::VectorXd truth_flat = layout.flatten(truth);
        for (int j = 0; j < dim; ++j) {
            int rank = 0;
            for (int m = 0; m < kept; ++m) {
                const int idx = thin - 1 + m * thin;
                if (draws.draws(idx, j) < truth_flat[j]) ++rank;
            }
            ranks[j].push_back(rank);
        }
    }
    crit.check("fits completed", fits_failed <= reps / 20,
               std::to_string(reps - fits_failed) + "/" + std::to_string(reps) + " fits usable");

    // Rank statistics take values 0..kept; fold into 10 equal bins.
    const int bins = 10;
    int uniform_ok = 0;
    double worst_p = 1.0;
    std::string worst_name;
    const std::vector<std::string> names = layout.names(spec.covariate_names);
    for (int j = 0; j < dim; ++j) {
        std::vector<double> counts(bins, 0.0);
        for (int rank : ranks[j]) counts[std::min(bins - 1, rank * bins / (kept + 1))] += 1.0;
        const std::vector<double> expected(
            bins, static_cast<double>(ranks[j].size()) / bins);
        const double p = chi2_gof_pvalue(counts, expected);
        if (p > 0.01) ++uniform_ok;
        if (p < worst_p) {
            worst_p = p;
            worst_name = names[j];
        }
    }
    const double frac = static_cast<double>(uniform_ok) / dim;
    crit.check("rank uniformity", frac >= 0.9,
               std::to_string(uniform_ok) + "/" + std::to_string(dim) +
                   " parameters uniform (need 90%); worst p = " + fmt(worst_p) + " at " +
                   worst_name);

    // Finite-difference validation of the analytic posterior gradient.
    ModelSpec gspec = spec;
    int grad_bad = 0;
    double worst_rel = 0.0;
    RngStream grng = root.fold(3);
    Params gen = sample_prior(gspec, grng);
    PanelGrid gpanel = panel_from_model(gspec, gen, 40, grng);
    for (int trial = 0; trial < 100; ++trial) {
        gspec.count_family =
            trial % 2 == 0 ? CountFamily::poisson : CountFamily::negative_binomial;
        const ParamLayout glayout(gspec);
        RngStream trng = grng.fold(10 + trial);
        Params point = sample_prior(gspec, trng);
        point.beta_h.rho = trng.uniform(-0.9, 0.9);  // keep well inside the support
        point.theta_h.rho = trng.uniform(-0.9, 0.9);
        point.beta_h.sigma = trng.uniform(0.05, gspec.sigma_max * 0.9);
        point.theta_h.sigma = trng.uniform(0.05, gspec.sigma_max * 0.9);
        if (gspec.count_family == CountFamily::negative_binomial)
            point.dispersion = trng.uniform(0.5, 3.0);
        const Eigen::VectorXd x = glayout.flatten(point);
        const Eigen::VectorXd g = grad_log_posterior(gpanel, point, gspec);
        for (int j = 0; j < glayout.dim(); ++j) {
            const double h = 1e-5 * std::max(1.0, std::abs(x[j]));
            Eigen::VectorXd xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const double fp = log_posterior(gpanel, glayout.unflatten(xp), gspec);
            const double fm = log_posterior(gpanel, glayout.unflatten(xm), gspec);
            const double fd = (fp - fm) / (2.0 * h);
            const double rel = std::abs(g[j] - fd) / std::max(1.0, std::abs(g[j]));
            worst_rel = std::max(worst_rel, rel);
            if (rel > 1e-5) ++grad_bad;
        }
    }
    crit.check("gradient finite differences", grad_bad == 0,
               "100 points, worst relative error " + fmt(worst_rel) + " (tolerance 1e-5)");
    return crit.all_ok();
}

// ---------------------------------------------------------------------------
// Criterion 5: full operating-characteristics study, both synthetic settings.
// ---------------------------------------------------------------------------

const MethodMetrics* find_method(const SimStudyResult& result, const std::string& name) {
    for (const MethodMetrics& m : result.metrics)
        if (m.method == name) return &m;
    return nullptr;
}

bool criterion5(const fs::path& checkpoint_root) {
    Criterion crit;
    SimStudyConfig sc;
    sc.replications = 200;
    sc.s = 6;
    sc.s_prime = 13;
    sc.grace_g = 6;
    sc.gcomp_B = 30;
    sc.bootstrap_M = 250;
    sc.truth_replications = 1000000;
    sc.seed = 1;
    sc.mcmc.chains = 2;
    sc.mcmc.warmup = 1500;
    sc.mcmc.retained = 500;
    sc.mcmc.thin = 4;

    fs::create_directories(checkpoint_root);
    sc.checkpoint_dir = checkpoint_root / "setting1";
    const SimStudyResult s1 = run_simulation_study(setting1_config(), sc);
    sc.checkpoint_dir = checkpoint_root / "setting2";
    const SimStudyResult s2 = run_simulation_study(setting2_config(), sc);

    const MethodMetrics* b1 = find_method(s1, "bayes_gar1");
    const MethodMetrics* f1 = find_method(s1, "freq_glm");
    const MethodMetrics* g1 = find_method(s1, "grace_period");
    const MethodMetrics* e1 = find_method(s1, "ever_never");
    const MethodMetrics* b2 = find_method(s2, "bayes_gar1");
    const MethodMetrics* f2 = find_method(s2, "freq_glm");
    const MethodMetrics* g2 = find_method(s2, "grace_period");
    if (!b1 || !f1 || !g1 || !e1 || !b2 || !f2 || !g2) {
        crit.check("study completed", false, "missing method metrics");
        return false;
    }
    crit.check("joint-model coverage, setting 1",
               b1->coverage >= 0.90 && b1->coverage <= 0.99,
               fmt(b1->coverage) + " in [0.90, 0.99]");
    crit.check("frequentist coverage, setting 1",
               f1->coverage >= 0.90 && f1->coverage <= 1.00,
               fmt(f1->coverage) + " in [0.90, 1.00]");
    crit.check("ever-never coverage collapses, setting 1", e1->coverage < 0.05,
               fmt(e1->coverage) + " < 0.05");
    const double model_bias = std::max(std::abs(b1->pct_bias), std::abs(f1->pct_bias));
    crit.check("percent-bias ordering, setting 1",
               std::abs(e1->pct_bias) > std::abs(g1->pct_bias) &&
                   std::abs(g1->pct_bias) > model_bias,
               "|" + fmt(e1->pct_bias) + "| > |" + fmt(g1->pct_bias) + "| > " + fmt(model_bias));
    crit.check("joint-model interval narrower, setting 2", b2->mean_width < f2->mean_width,
               fmt(b2->mean_width) + " < " + fmt(f2->mean_width));
    crit.check("grace-period coverage collapses, setting 2", g2->coverage < 0.5,
               fmt(g2->coverage) + " < 0.5");
    return crit.all_ok();
}

// ---------------------------------------------------------------------------
// Criterion 6: smoothing keeps hazards proper in sparse late intervals.
// ---------------------------------------------------------------------------

bool criterion6() {
    Criterion crit;
    DgpConfig dgp = setting1_config();
    dgp.label = "sparse_tail";
    dgp.n = 120;
    dgp.K = 40;
    dgp.tau = 40.0;
    dgp.censor_intercept = -1.7;  // heavy censoring thins the risk set quickly
    dgp.death_intercept = -3.2;
    dgp.seed = 7;
    const CohortData cohort = generate_dataset(dgp, dgp.seed);
    const PanelGrid panel = discretize(cohort, dgp.K, dgp.tau);

    long late_risk = panel.at_risk(36);
    bool empty_late_death = false;
    int witness = 0;
    for (int k = 36; k <= panel.K; ++k) {
        if (panel.at_risk(k) >= 1 && panel.deaths_at(k) == 0) {
            empty_late_death = true;
            witness = k;
            break;
        }
    }
    crit.check("risk set is sparse after interval 35", late_risk < 10,
               std::to_string(late_risk) + " at risk entering interval 36");
    crit.check("a late interval has zero observed deaths", empty_late_death,
               empty_late_death ? "interval " + std::to_string(witness) : "none found");

    ModelSpec spec;
    spec.K = panel.K;
    spec.covariate_names = panel.covariate_names;
    spec.lag_transform = LagTransform::positive_indicator;
    McmcConfig mc;
    mc.chains = 2;
    mc.warmup = 1500;
    mc.retained = 800;
    mc.seed = 11;
    const PosteriorDraws draws = sample_posterior(panel, spec, mc);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(spec.p());
    double lo = 1.0, hi = 0.0;
    for (int k = 2; k <= spec.K; ++k) {
        double mean_hazard = 0.0;
        for (int m = 0; m < draws.M(); ++m) {
            const Params params = draws.params_at(m);
            mean_hazard += hazard(k, 0, 0, zero, params, spec);
        }
        mean_hazard /= draws.M();
        lo = std::min(lo, mean_hazard);
        hi = std::max(hi, mean_hazard);
    }
    crit.check("posterior-mean hazards stay proper", lo > 0.001 && hi < 0.999,
               "range [" + fmt(lo) + ", " + fmt(hi) + "] inside (0.001, 0.999)");
    return crit.all_ok();
}

// ---------------------------------------------------------------------------
// Criterion 7: reproducibility guarantees.
// ---------------------------------------------------------------------------

bool criterion7() {
    Criterion crit;

    // Dirichlet weights normalize exactly.
    RngStream wrng(20260707);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(wrng.uniform() * 2000);
        RngStream local = wrng.fold(trial);
        const Eigen::VectorXd w = bayesian_bootstrap_weights(n, local);
        worst = std::max(worst, std::abs(w.sum() - 1.0));
    }
    crit.check("bootstrap weights normalize", worst < 1e-12,
               "max |sum - 1| = " + fmt(worst) + " over 200 draws");

    DgpConfig dgp = setting1_config();
    dgp.n = 80;
    dgp.K = 6;
    dgp.tau = 6.0;
    const CohortData cohort = generate_dataset(dgp, 3);
    const PanelGrid panel = discretize(cohort, dgp.K, dgp.tau);
    ModelSpec spec;
    spec.K = panel.K;
    spec.covariate_names = panel.covariate_names;
    McmcConfig mc;
    mc.chains = 2;
    mc.warmup = 300;
    mc.retained = 200;
    mc.seed = 99;
    const PosteriorDraws d1 = sample_posterior(panel, spec, mc);
    const PosteriorDraws d2 = sample_posterior(panel, spec, mc);
    const bool same_draws = d1.draws.rows() == d2.draws.rows() &&
                            d1.draws.cols() == d2.draws.cols() &&
                            (d1.draws.array() == d2.draws.array()).all();
    crit.check("seeded refits are identical", same_draws,
               "draw matrices compare bitwise equal");

    const fs::path dir = fs::temp_directory_path() / "recurate_accept7";
    fs::create_directories(dir);
    write_draws_csv(d1, dir / "a.csv");
    write_draws_csv(d2, dir / "b.csv");
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    crit.check("persisted draws are byte-identical", slurp(dir / "a.csv") == slurp(dir / "b.csv"),
               "two seeded runs, identical files");

    const EstimandSummary null_psi =
        estimate_psi(d1, 4, 4, panel.covariates, spec, 25, 17);
    bool all_zero = true;
    for (double v : null_psi.psi) all_zero = all_zero && v == 0.0;
    crit.check("identical regimes give exactly zero", all_zero,
               std::to_string(null_psi.psi.size()) + " posterior draws, all exactly 0");

    const EstimandSummary p1 = estimate_psi(d1, 3, 7, panel.covariates, spec, 25, 17);
    const EstimandSummary p2 = estimate_psi(d2, 3, 7, panel.covariates, spec, 25, 17);
    crit.check("seeded contrasts are identical", p1.psi == p2.psi && p1.mean == p2.mean,
               "posterior contrast draws compare bitwise equal");
    return crit.all_ok();
}

// ---------------------------------------------------------------------------
// Criterion 8: posterior mean agrees with the frequentist g-computation on a
// large, lightly censored cohort.
// ---------------------------------------------------------------------------

bool criterion8() {
    Criterion crit;
    DgpConfig dgp = setting1_config();
    dgp.label = "light_censoring";
    dgp.n = 5000;
    dgp.censor_intercept = -5.0;
    const CohortData cohort = generate_dataset(dgp, 21);
    const PanelGrid panel = discretize(cohort, dgp.K, dgp.tau);
    long censored = 0;
    for (const SubjectPanel& s : panel.subjects)
        censored += s.exit == ExitKind::censoring ? 1 : 0;
    crit.check("censoring is light", censored < panel.n() / 10,
               std::to_string(censored) + "/" + std::to_string(panel.n()) + " censored");

    ModelSpec spec;
    spec.K = panel.K;
    spec.covariate_names = panel.covariate_names;
    spec.lag_transform = LagTransform::positive_indicator;
    McmcConfig mc;
    mc.chains = 2;
    mc.warmup = 1000;
    mc.retained = 500;
    mc.seed = 5;
    const PosteriorDraws draws = sample_posterior(panel, spec, mc);
    const EstimandSummary bayes = estimate_psi(draws, 6, 13, panel.covariates, spec, 40, 6);
    RunningMoments post;
    for (double v : bayes.psi) post.add(v);
    const double bayes_se = post.sd();

    const ComparatorResult freq = freq_glm_gcomp(panel, spec, 6, 13, 150, 40, 7);
    RunningMoments boot;
    for (double v : freq.replicates) boot.add(v);
    const double freq_se = boot.sd();

    const double diff = std::abs(bayes.mean - freq.estimate);
    const double combined = std::sqrt(bayes_se * bayes_se + freq_se * freq_se);
    crit.check("posterior mean matches frequentist point estimate", diff <= 2.0 * combined,
               "|" + fmt(bayes.mean) + " - " + fmt(freq.estimate) + "| = " + fmt(diff) +
                   " <= 2 * " + fmt(combined));
    return crit.all_ok();
}

}  // namespace

int main(int argc, char** argv) {
    int criterion = 0;
    fs::path checkpoint = fs::temp_directory_path() / "recurate_sim_checkpoints";
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) {
            criterion = std::atoi(argv[++i]);
        } else if (arg == "--checkpoint" && i + 1 < argc) {
            checkpoint = argv[++i];
        } else {
            std::cerr << "usage: acceptance --criterion N [--checkpoint DIR]\n";
            return 2;
        }
    }
    if (criterion < 1 || criterion > 8) {
        std::cerr << "usage: acceptance --criterion N (1..8) [--checkpoint DIR]\n";
        return 2;
    }
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    try {
        switch (criterion) {
            case 1: ok = criterion1(); break;
            case 2: ok = criterion2(); break;
            case 3: ok = criterion3(); break;
            case 4: ok = criterion4(); break;
            case 5: ok = criterion5(checkpoint); break;
            case 6: ok = criterion6(); break;
            case 7: ok = criterion7(); break;
            case 8: ok = criterion8(); break;
        }
    } catch (const std::exception& e) {
        std::cout << "  [FAIL] unexpected exception: " << e.what() << "\n";
        ok = false;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << criterion << ": " << (ok ? "PASS" : "FAIL") << " ("
              << format_double(secs) << "s)\n";
    return ok ? 0 : 1;
}
