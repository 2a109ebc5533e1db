#include "recurate/gcomp.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "recurate/csv.hpp"
#include "recurate/errors.hpp"
#include "recurate/stats.hpp"

namespace recurate {

namespace {

constexpr std::uint64_t kTagTrajectories = 1;
constexpr std::uint64_t kTagWeights = 2;

// Per-(params, covariate) linear-predictor bases so the inner trajectory loop touches no
// Eigen objects. Reproduces hazard()/count_mean() arithmetic exactly, including clamps and
// the left-to-right addition order of the linear predictor.
struct TrajectoryEngine {
    int K;
    bool capped;
    long cap = 0;
    const Params& params;
    const ModelSpec& spec;
    std::vector<double> death_base;  // beta0[k] + l . betaL, index k-1
    std::vector<double> count_base;  // theta0[k] + l . thetaL

    TrajectoryEngine(const Eigen::VectorXd& l, const Params& p, const ModelSpec& s)
        : K(s.K), capped(s.count_cap.has_value()), params(p), spec(s) {
        if (l.size() != p.betaL.size() || l.size() != p.thetaL.size()) {
            throw ConfigError("covariate vector length does not match the model");
        }
        if (capped) cap = *s.count_cap;
        const double bl = l.dot(p.betaL);
        const double tl = l.dot(p.thetaL);
        death_base.resize(K);
        count_base.resize(K);
        for (int k = 0; k < K; ++k) {
            death_base[k] = p.beta0[k] + bl;
            count_base[k] = p.theta0[k] + tl;
        }
    }

    double hazard_at(int k, int a, long y_prev) const {
        const double lp =
            death_base[k - 1] + lag_value(y_prev, spec) * params.betaY + a * params.betaA;
        return clamp_probability(expit(lp));
    }

    double mean_at(int k, int a, long y_prev) const {
        const double lp =
            count_base[k - 1] + lag_value(y_prev, spec) * params.thetaY + a * params.thetaA;
        return clamp_mean(std::exp(lp));
    }

    // Events-per-interval-alive for one trajectory; consumes rng exactly like
    // simulate_trajectory (one bernoulli per survived hazard, one count draw per alive
    // interval).
    double simulate_rate(Regime regime, RngStream& rng) const {
        long events = 0;
        long y_prev = 0;
        int alive = K;
        for (int k = 1; k <= K; ++k) {
            // The transition into interval k conditions on treatment already in place at
            // the end of interval k - 1; counts within k condition on treatment by the
            // end of k itself. Mirrors the panel likelihood's alignment exactly.
            if (k >= 2 && rng.bernoulli(hazard_at(k, regime.treatment(k - 1), y_prev))) {
                alive = k - 1;
                break;
            }
            const long y = draw_count(rng, mean_at(k, regime.treatment(k), y_prev), params, spec);
            events += y;
            y_prev = y;
        }
        return static_cast<double>(events) / alive;
    }
};

}  // namespace

Regime make_regime(int s, int K) {
    if (s < 1 || s > K + 1) {
        throw ConfigError("regime s = " + std::to_string(s) + " outside 1.." +
                          std::to_string(K + 1));
    }
    return Regime{s};
}

Trajectory simulate_trajectory(const Eigen::VectorXd& l, Regime regime, const Params& params,
                               const ModelSpec& spec, RngStream& rng) {
    make_regime(regime.s, spec.K);
    const TrajectoryEngine engine(l, params, spec);
    const int K = spec.K;
    Trajectory tr;
    tr.y.assign(K, 0);
    tr.t.assign(K, 0);
    tr.intervals_alive = K;
    long y_prev = 0;
    for (int k = 1; k <= K; ++k) {
        if (k >= 2 && rng.bernoulli(engine.hazard_at(k, regime.treatment(k - 1), y_prev))) {
            for (int j = k; j <= K; ++j) tr.t[j - 1] = 1;
            tr.intervals_alive = k - 1;
            break;
        }
        tr.y[k - 1] = draw_count(rng, engine.mean_at(k, regime.treatment(k), y_prev), params, spec);
        tr.total_events += tr.y[k - 1];
        y_prev = tr.y[k - 1];
    }
    return tr;
}

double conditional_rate(const Eigen::VectorXd& l, Regime regime, const Params& params,
                        const ModelSpec& spec, int B, const RngStream& stream) {
    if (B < 1) throw ConfigError("B must be >= 1");
    make_regime(regime.s, spec.K);
    const TrajectoryEngine engine(l, params, spec);
    double total = 0.0;
    for (int b = 0; b < B; ++b) {
        RngStream rb = stream.fold(static_cast<std::uint64_t>(b))
                           .fold(static_cast<std::uint64_t>(regime.s));
        total += engine.simulate_rate(regime, rb);
    }
    return total / B;
}

Eigen::VectorXd bayesian_bootstrap_weights(std::size_t n, RngStream& rng) {
    if (n == 0) throw ConfigError("cannot draw bootstrap weights over zero subjects");
    const std::vector<double> w = rng.dirichlet_uniform(n);
    Eigen::VectorXd out(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) out[static_cast<Eigen::Index>(i)] = w[i];
    return out;
}

double psi_draw(int s, int s_prime, const Params& params, const Eigen::VectorXd& weights,
                const Eigen::MatrixXd& covariates, const ModelSpec& spec, int B,
                const RngStream& stream) {
    if (covariates.rows() == 0) throw DataError("covariate table is empty");
    if (weights.size() != covariates.rows()) {
        throw ConfigError("weight vector length does not match the covariate table");
    }
    const Regime r1 = make_regime(s, spec.K);
    const Regime r0 = make_regime(s_prime, spec.K);
    double psi = 0.0;
    for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
        const Eigen::VectorXd l = covariates.row(i).transpose();
        const RngStream si = stream.fold(static_cast<std::uint64_t>(i));
        psi += weights[i] * (conditional_rate(l, r1, params, spec, B, si) -
                             conditional_rate(l, r0, params, spec, B, si));
    }
    return psi;
}

EstimandSummary estimate_psi(const PosteriorDraws& draws, int s, int s_prime,
                             const Eigen::MatrixXd& covariates, const ModelSpec& spec, int B,
                             std::uint64_t seed) {
    if (draws.M() <= 0) throw ConfigError("posterior draw set is empty");
    make_regime(s, spec.K);
    make_regime(s_prime, spec.K);
    if (covariates.rows() == 0) throw DataError("covariate table is empty");
    if (B < 1) throw ConfigError("B must be >= 1");

    EstimandSummary out;
    out.s = s;
    out.s_prime = s_prime;
    out.B = B;
    out.seed = seed;
    out.psi.reserve(static_cast<std::size_t>(draws.M()));

    const RngStream root(seed);
    const std::size_t n = static_cast<std::size_t>(covariates.rows());
    for (int m = 0; m < draws.M(); ++m) {
        const Params p = draws.params_at(m);
        RngStream wrng = root.fold(kTagWeights).fold(static_cast<std::uint64_t>(m));
        const Eigen::VectorXd w = bayesian_bootstrap_weights(n, wrng);
        const RngStream traj = root.fold(kTagTrajectories).fold(static_cast<std::uint64_t>(m));
        out.psi.push_back(psi_draw(s, s_prime, p, w, covariates, spec, B, traj));
    }

    std::vector<double> sorted = out.psi;
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (double v : out.psi) total += v;
    out.mean = total / static_cast<double>(out.psi.size());
    out.lo95 = percentile(sorted, 0.025);
    out.hi95 = percentile(sorted, 0.975);
    return out;
}

AdaptiveBResult adaptive_B(const Params& params, int s, int s_prime,
                           const Eigen::MatrixXd& covariates, const ModelSpec& spec,
                           double precision, std::uint64_t seed, int min_B, int cap) {
    if (precision <= 0.0) throw ConfigError("precision must be positive");
    if (min_B < 1) throw ConfigError("minimum B must be >= 1");
    if (covariates.rows() == 0) throw DataError("covariate table is empty");
    const Eigen::VectorXd weights =
        Eigen::VectorXd::Constant(covariates.rows(), 1.0 / covariates.rows());
    const RngStream traj = RngStream(seed).fold(kTagTrajectories).fold(0);

    int b = min_B;
    double prev = psi_draw(s, s_prime, params, weights, covariates, spec, b, traj);
    while (true) {
        const int next = 2 * b;
        const double cur = psi_draw(s, s_prime, params, weights, covariates, spec, next, traj);
        const double delta = std::abs(cur - prev);
        if (delta < precision) return AdaptiveBResult{b, true, delta};
        if (next > cap) return AdaptiveBResult{next, false, delta};
        b = next;
        prev = cur;
    }
}

namespace {

void enumerate_paths(const TrajectoryEngine& engine, Regime regime,
                     const std::function<const std::vector<double>&(int, int, long)>& pmf_at,
                     int k, long y_prev, double prob, std::vector<long>& y_acc,
                     std::vector<OutcomePath>& out) {
    const int K = engine.K;
    if (k > K) {
        OutcomePath path;
        path.y = y_acc;
        path.t.assign(K, 0);
        path.death_interval = K + 1;
        path.prob = prob;
        for (long y : y_acc) path.total_events += y;
        path.intervals_alive = K;
        path.rate = static_cast<double>(path.total_events) / K;
        out.push_back(std::move(path));
        return;
    }
    const int a = regime.treatment(k);
    double alive_prob = prob;
    if (k >= 2) {
        const double lam = engine.hazard_at(k, regime.treatment(k - 1), y_prev);
        OutcomePath path;
        path.y = y_acc;
        path.y.resize(K, 0);
        path.t.assign(K, 0);
        for (int j = k; j <= K; ++j) path.t[j - 1] = 1;
        path.death_interval = k;
        path.prob = prob * lam;
        for (long y : path.y) path.total_events += y;
        path.intervals_alive = k - 1;
        path.rate = static_cast<double>(path.total_events) / path.intervals_alive;
        out.push_back(std::move(path));
        alive_prob = prob * (1.0 - lam);
    }
    const std::vector<double>& pmf = pmf_at(k, a, y_prev);
    for (long y = 0; y < static_cast<long>(pmf.size()); ++y) {
        y_acc.push_back(y);
        enumerate_paths(engine, regime, pmf_at, k + 1, y, alive_prob * pmf[y], y_acc, out);
        y_acc.pop_back();
    }
}

}  // namespace

std::vector<OutcomePath> gformula_pmf(const Params& params, const ModelSpec& spec, Regime regime,
                                      const Eigen::VectorXd& l) {
    if (!spec.count_cap.has_value()) {
        throw ConfigError("exact enumeration requires a capped count family");
    }
    if (spec.K > 4 || *spec.count_cap > 5) {
        throw ConfigError("enumeration guardrails: K <= 4 and count cap <= 5");
    }
    make_regime(regime.s, spec.K);
    const TrajectoryEngine engine(l, params, spec);

    // Cache one truncated pmf per (interval, treatment, lag) combination.
    const long cap = *spec.count_cap;
    std::vector<std::vector<double>> cache(
        static_cast<std::size_t>(spec.K) * 2 * static_cast<std::size_t>(cap + 1));
    std::vector<bool> filled(cache.size(), false);
    auto pmf_at = [&](int k, int a, long y_prev) -> const std::vector<double>& {
        const std::size_t idx =
            (static_cast<std::size_t>(k - 1) * 2 + static_cast<std::size_t>(a)) *
                static_cast<std::size_t>(cap + 1) +
            static_cast<std::size_t>(y_prev);
        if (!filled[idx]) {
            cache[idx] = truncated_count_pmf(engine.mean_at(k, a, y_prev), params, spec, cap);
            filled[idx] = true;
        }
        return cache[idx];
    };

    std::vector<OutcomePath> out;
    std::vector<long> y_acc;
    const std::function<const std::vector<double>&(int, int, long)> pmf_fn = pmf_at;
    enumerate_paths(engine, regime, pmf_fn, 1, 0, 1.0, y_acc, out);

    double total = 0.0;
    for (const auto& path : out) total += path.prob;
    if (std::abs(total - 1.0) > 1e-9) {
        throw NumericalError("enumerated path probabilities sum to " + std::to_string(total));
    }
    return out;
}

double gformula_expected_rate(const std::vector<OutcomePath>& pmf) {
    double total = 0.0;
    for (const auto& path : pmf) total += path.prob * path.rate;
    return total;
}

double gformula_psi(const Params& params, const ModelSpec& spec, int s, int s_prime,
                    const Eigen::VectorXd& l) {
    const double r1 = gformula_expected_rate(gformula_pmf(params, spec, make_regime(s, spec.K), l));
    const double r0 =
        gformula_expected_rate(gformula_pmf(params, spec, make_regime(s_prime, spec.K), l));
    return r1 - r0;
}

void write_estimand_json(const std::vector<EstimandSummary>& estimates,
                         const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& est : estimates) {
        doc.push_back({{"s", est.s},
                       {"s_prime", est.s_prime},
                       {"posterior_mean", est.mean},
                       {"lo95", est.lo95},
                       {"hi95", est.hi95},
                       {"B", est.B},
                       {"seed", est.seed},
                       {"n_draws", est.psi.size()},
                       {"psi_draws", est.psi}});
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << doc.dump(2) << "\n";
}

void write_psi_grid_csv(const std::vector<EstimandSummary>& estimates,
                        const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(estimates.size());
    for (const auto& est : estimates) {
        rows.push_back({std::to_string(est.s), format_double(est.mean), format_double(est.lo95),
                        format_double(est.hi95)});
    }
    write_csv(path, {"s", "posterior_mean", "lo95", "hi95"}, rows);
}

}  // namespace recurate
