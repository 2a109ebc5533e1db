#include "recurate/comparators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "recurate/csv.hpp"
#include "recurate/errors.hpp"
#include "recurate/gcomp.hpp"
#include "recurate/stats.hpp"

namespace recurate {

namespace {

constexpr std::uint64_t kTagTrajectories = 1;
constexpr std::uint64_t kTagResample = 3;

bool ever_switched(const SubjectPanel& subject) {
    for (const auto& row : subject.rows) {
        if (row.a == 1) return true;
    }
    return subject.exit != ExitKind::none && subject.exit_a == 1;
}

struct PointValue {
    double value = 0.0;
    bool ridged = false;
};

void summarize_bootstrap(ComparatorResult& result) {
    if (!result.replicates.empty()) {
        std::vector<double> sorted = result.replicates;
        std::sort(sorted.begin(), sorted.end());
        result.lo95 = percentile(sorted, 0.025);
        result.hi95 = percentile(sorted, 0.975);
    }
    result.unreliable =
        result.requested_replicates > 0 &&
        result.failures * 5 > result.requested_replicates;  // > 20%
}

// Shared bootstrap loop: point estimate on the full panel, then percentile interval over
// subject-level resamples. The estimator throws on undefined replicates (counted, not fatal).
ComparatorResult bootstrap_comparator(
    const std::string& method, const PanelGrid& panel, int bootstrap_M, std::uint64_t seed,
    const std::function<PointValue(const PanelGrid&, const RngStream&)>& estimator) {
    if (bootstrap_M < 0) throw ConfigError("bootstrap replicate count must be >= 0");
    ComparatorResult result;
    result.method = method;
    result.requested_replicates = bootstrap_M;

    const RngStream root(seed);
    const PointValue point = estimator(panel, root.fold(kTagTrajectories).fold(0));
    result.estimate = point.value;
    result.point_ridged = point.ridged;
    result.lo95 = point.value;
    result.hi95 = point.value;

    result.replicates.reserve(static_cast<std::size_t>(bootstrap_M));
    for (int r = 1; r <= bootstrap_M; ++r) {
        RngStream resample_rng = root.fold(kTagResample).fold(static_cast<std::uint64_t>(r));
        const PanelGrid resampled = resample_panel(panel, resample_rng);
        try {
            const PointValue rep =
                estimator(resampled, root.fold(kTagTrajectories).fold(static_cast<std::uint64_t>(r)));
            result.replicates.push_back(rep.value);
            if (rep.ridged) ++result.ridged;
        } catch (const std::exception&) {
            ++result.failures;
        }
    }
    summarize_bootstrap(result);
    return result;
}

PointValue ever_never_point(const PanelGrid& panel) {
    std::vector<double> events;
    std::vector<double> exposure;
    std::vector<double> treated;
    for (const auto& subject : panel.subjects) {
        if (subject.n_rows() == 0) continue;  // no observed follow-up
        long y = 0;
        for (const auto& row : subject.rows) y += row.y;
        events.push_back(static_cast<double>(y));
        exposure.push_back(static_cast<double>(subject.n_rows()));
        treated.push_back(ever_switched(subject) ? 1.0 : 0.0);
    }
    const auto n = static_cast<Eigen::Index>(events.size());
    if (n == 0) throw DataError("ever-never contrast undefined: no observed follow-up");
    bool any_treated = false;
    bool any_untreated = false;
    for (double t : treated) (t > 0.5 ? any_treated : any_untreated) = true;
    if (!any_treated || !any_untreated) {
        throw DataError("ever-never contrast undefined: empty treated or untreated group");
    }

    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    Eigen::VectorXd offset(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = treated[static_cast<std::size_t>(i)];
        y[i] = events[static_cast<std::size_t>(i)];
        offset[i] = std::log(exposure[static_cast<std::size_t>(i)]);
    }
    const GlmFit fit = fit_glm(x, y, GlmFamily::poisson, offset);
    if (!fit.converged) throw NumericalError("ever-never Poisson fit did not converge");
    return PointValue{std::exp(fit.coef[0] + fit.coef[1]) - std::exp(fit.coef[0]), fit.ridged};
}

PointValue grace_period_point(const PanelGrid& panel, int g) {
    const int p = panel.p();
    std::vector<Eigen::Index> kept;
    for (std::size_t i = 0; i < panel.subjects.size(); ++i) {
        if (panel.subjects[i].n_rows() > g) kept.push_back(static_cast<Eigen::Index>(i));
    }
    if (kept.empty()) throw DataError("grace-period contrast undefined: nobody at risk past g");

    const auto n = static_cast<Eigen::Index>(kept.size());
    Eigen::MatrixXd x(n, 2 + p);
    Eigen::VectorXd y(n);
    Eigen::VectorXd offset(n);
    for (Eigen::Index row = 0; row < n; ++row) {
        const auto& subject = panel.subjects[static_cast<std::size_t>(kept[row])];
        long total_events = 0;
        for (const auto& pr : subject.rows) total_events += pr.y;
        x(row, 0) = 1.0;
        for (int j = 0; j < p; ++j) x(row, 1 + j) = panel.covariates(kept[row], j);
        x(row, 1 + p) = subject.rows[static_cast<std::size_t>(g - 1)].a;  // treatment at g
        // Events and exposure over the full followup: the grace classifier decides the
        // group, but the rate itself stays on the whole-horizon incidence scale, which
        // is what makes this estimate comparable to the causal rate difference.
        y[row] = static_cast<double>(total_events);
        offset[row] = std::log(static_cast<double>(subject.n_rows()));
    }
    const GlmFit fit = fit_glm(x, y, GlmFamily::poisson, offset);
    if (!fit.converged) throw NumericalError("grace-period Poisson fit did not converge");

    // Average per-interval predictions under both assignments over the analysis sample.
    double diff = 0.0;
    for (Eigen::Index row = 0; row < n; ++row) {
        double eta = fit.coef[0];
        for (int j = 0; j < p; ++j) eta += fit.coef[1 + j] * x(row, 1 + j);
        diff += std::exp(eta + fit.coef[1 + p]) - std::exp(eta);
    }
    return PointValue{diff / static_cast<double>(n), fit.ridged};
}

}  // namespace

PanelGrid resample_panel(const PanelGrid& panel, RngStream& rng) {
    const std::size_t n = panel.subjects.size();
    if (n == 0) throw DataError("cannot resample an empty panel");
    PanelGrid out;
    out.K = panel.K;
    out.tau = panel.tau;
    out.covariate_names = panel.covariate_names;
    out.covariates.resize(static_cast<Eigen::Index>(n), panel.covariates.cols());
    out.subjects.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto pick = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
        const std::size_t idx = std::min(pick, n - 1);
        out.subjects.push_back(panel.subjects[idx]);
        out.covariates.row(static_cast<Eigen::Index>(i)) =
            panel.covariates.row(static_cast<Eigen::Index>(idx));
    }
    return out;
}

ComparatorResult ever_never_estimate(const PanelGrid& panel, int bootstrap_M,
                                     std::uint64_t seed) {
    return bootstrap_comparator("ever_never", panel, bootstrap_M, seed,
                                [](const PanelGrid& grid, const RngStream&) {
                                    return ever_never_point(grid);
                                });
}

ComparatorResult grace_period_estimate(const PanelGrid& panel, int g, int bootstrap_M,
                                       std::uint64_t seed) {
    if (g < 1 || g > panel.K) throw ConfigError("grace interval g must lie in 1..K");
    return bootstrap_comparator("grace_period", panel, bootstrap_M, seed,
                                [g](const PanelGrid& grid, const RngStream&) {
                                    return grace_period_point(grid, g);
                                });
}

MleFit fit_mle(const PanelGrid& panel, const ModelSpec& spec) {
    MleFit out;
    const int K = spec.K;
    const int p = spec.p();
    if (panel.K != K || panel.p() != p) {
        out.message = "panel shape does not match the model";
        return out;
    }
    if (K < 2) {
        out.message = "per-interval MLE needs K >= 2";
        return out;
    }

    // Death design: one transition row per at-risk interval k >= 2 plus the death row.
    // Columns: interval dummies k = 2..K, covariates, lagged events, treatment.
    std::vector<std::array<double, 3>> death_extra;  // lag value, a, outcome
    std::vector<int> death_k;
    std::vector<Eigen::Index> death_subject;
    std::vector<double> count_y;
    std::vector<int> count_k;
    std::vector<Eigen::Index> count_subject;
    std::vector<std::array<double, 2>> count_extra;  // lag value, a

    for (std::size_t i = 0; i < panel.subjects.size(); ++i) {
        const auto& subject = panel.subjects[i];
        const auto idx = static_cast<Eigen::Index>(i);
        for (const auto& row : subject.rows) {
            if (row.k >= 2) {
                death_k.push_back(row.k);
                death_subject.push_back(idx);
                death_extra.push_back({lag_value(subject.y_lag(row.k), spec),
                                       static_cast<double>(subject.a_lag(row.k)), 0.0});
            }
            count_k.push_back(row.k);
            count_subject.push_back(idx);
            count_extra.push_back(
                {lag_value(subject.y_lag(row.k), spec), static_cast<double>(row.a)});
            count_y.push_back(static_cast<double>(row.y));
        }
        if (subject.exit == ExitKind::death && subject.exit_interval >= 2 &&
            subject.exit_interval <= K) {
            death_k.push_back(subject.exit_interval);
            death_subject.push_back(idx);
            death_extra.push_back({lag_value(subject.y_lag(subject.exit_interval), spec),
                                   static_cast<double>(subject.a_lag(subject.exit_interval)), 1.0});
        }
    }

    if (death_k.empty() || count_k.empty()) {
        out.message = "no at-risk rows to fit";
        return out;
    }

    std::vector<long> death_rows_at(static_cast<std::size_t>(K) + 1, 0);
    for (int k : death_k) ++death_rows_at[static_cast<std::size_t>(k)];
    for (int k = 2; k <= K; ++k) {
        if (death_rows_at[static_cast<std::size_t>(k)] == 0) {
            out.message = "empty death risk set at interval " + std::to_string(k);
            return out;
        }
    }
    std::vector<long> count_rows_at(static_cast<std::size_t>(K) + 1, 0);
    for (int k : count_k) ++count_rows_at[static_cast<std::size_t>(k)];
    for (int k = 1; k <= K; ++k) {
        if (count_rows_at[static_cast<std::size_t>(k)] == 0) {
            out.message = "empty count risk set at interval " + std::to_string(k);
            return out;
        }
    }

    const auto nd = static_cast<Eigen::Index>(death_k.size());
    Eigen::MatrixXd xd = Eigen::MatrixXd::Zero(nd, (K - 1) + p + 2);
    Eigen::VectorXd yd(nd);
    for (Eigen::Index r = 0; r < nd; ++r) {
        const auto ur = static_cast<std::size_t>(r);
        xd(r, death_k[ur] - 2) = 1.0;
        for (int j = 0; j < p; ++j) xd(r, (K - 1) + j) = panel.covariates(death_subject[ur], j);
        xd(r, (K - 1) + p) = death_extra[ur][0];
        xd(r, (K - 1) + p + 1) = death_extra[ur][1];
        yd[r] = death_extra[ur][2];
    }
    const GlmFit death_fit = fit_glm(xd, yd, GlmFamily::logistic);
    if (!death_fit.converged) {
        out.message = "death hazard MLE did not converge";
        return out;
    }

    const auto nc = static_cast<Eigen::Index>(count_k.size());
    Eigen::MatrixXd xc = Eigen::MatrixXd::Zero(nc, K + p + 2);
    Eigen::VectorXd yc(nc);
    for (Eigen::Index r = 0; r < nc; ++r) {
        const auto ur = static_cast<std::size_t>(r);
        xc(r, count_k[ur] - 1) = 1.0;
        for (int j = 0; j < p; ++j) xc(r, K + j) = panel.covariates(count_subject[ur], j);
        xc(r, K + p) = count_extra[ur][0];
        xc(r, K + p + 1) = count_extra[ur][1];
        yc[r] = count_y[ur];
    }
    const GlmFamily count_family = spec.count_family == CountFamily::negative_binomial
                                       ? GlmFamily::negative_binomial
                                       : GlmFamily::poisson;
    const GlmFit count_fit = fit_glm(xc, yc, count_family);
    if (!count_fit.converged) {
        out.message = "count model MLE did not converge";
        return out;
    }

    Params params = make_zero_params(spec);
    for (int k = 2; k <= K; ++k) params.beta0[k - 1] = death_fit.coef[k - 2];
    params.beta0[0] = params.beta0[1];  // unused: no death transition into interval 1
    for (int j = 0; j < p; ++j) params.betaL[j] = death_fit.coef[(K - 1) + j];
    params.betaY = death_fit.coef[(K - 1) + p];
    params.betaA = death_fit.coef[(K - 1) + p + 1];
    for (int k = 1; k <= K; ++k) params.theta0[k - 1] = count_fit.coef[k - 1];
    for (int j = 0; j < p; ++j) params.thetaL[j] = count_fit.coef[K + j];
    params.thetaY = count_fit.coef[K + p];
    params.thetaA = count_fit.coef[K + p + 1];
    if (spec.count_family == CountFamily::negative_binomial) {
        params.dispersion = count_fit.dispersion;
    }

    out.params = std::move(params);
    out.ok = true;
    out.ridged = death_fit.ridged || count_fit.ridged;
    return out;
}

ComparatorResult freq_glm_gcomp(const PanelGrid& panel, const ModelSpec& spec, int s,
                                int s_prime, int bootstrap_M, int B, std::uint64_t seed) {
    make_regime(s, spec.K);
    make_regime(s_prime, spec.K);
    if (B < 1) throw ConfigError("B must be >= 1");

    auto estimator = [&spec, s, s_prime, B](const PanelGrid& grid,
                                            const RngStream& traj) -> PointValue {
        const MleFit fit = fit_mle(grid, spec);
        if (!fit.ok) throw NumericalError("MLE failed: " + fit.message);
        const Eigen::VectorXd weights = Eigen::VectorXd::Constant(
            grid.covariates.rows(), 1.0 / static_cast<double>(grid.covariates.rows()));
        const double psi =
            psi_draw(s, s_prime, fit.params, weights, grid.covariates, spec, B, traj);
        return PointValue{psi, fit.ridged};
    };
    return bootstrap_comparator("freq_glm", panel, bootstrap_M, seed, estimator);
}

void write_comparator_csv(const std::vector<ComparatorResult>& results,
                          const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(results.size());
    for (const auto& res : results) {
        rows.push_back({res.method, format_double(res.estimate), format_double(res.lo95),
                        format_double(res.hi95), std::to_string(res.replicates.size()),
                        std::to_string(res.failures), std::to_string(res.ridged),
                        res.unreliable ? "1" : "0"});
    }
    write_csv(path,
              {"method", "estimate", "lo95", "hi95", "replicates", "failures", "ridged",
               "unreliable"},
              rows);
}

}  // namespace recurate
