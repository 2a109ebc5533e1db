#include "recurate/diagnostics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "recurate/csv.hpp"
#include "recurate/errors.hpp"
#include "recurate/glm.hpp"
#include "recurate/stats.hpp"

namespace recurate {

namespace {

struct HazardRow {
    long subject = 0;
    int k = 0;
    bool lag_events = false;
    double outcome = 0.0;
};

HazardModel fit_hazard_rows(const PanelGrid& panel, const std::vector<HazardRow>& rows,
                            int first_interval, const char* what) {
    if (rows.empty()) {
        throw DataError(std::string(what) + " hazard has an empty risk set");
    }
    const int K = panel.K;
    const int p = panel.p();
    const int n_intervals = K - first_interval + 1;
    const int cols = n_intervals + p + 1;
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<long>(rows.size()), cols);
    Eigen::VectorXd y(static_cast<long>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const HazardRow& row = rows[r];
        X(static_cast<long>(r), row.k - first_interval) = 1.0;
        X.row(static_cast<long>(r)).segment(n_intervals, p) = panel.covariates.row(row.subject);
        X(static_cast<long>(r), cols - 1) = row.lag_events ? 1.0 : 0.0;
        y(static_cast<long>(r)) = row.outcome;
    }
    GlmFit fit = fit_glm(X, y, GlmFamily::logistic);
    if (!fit.converged) {
        throw NumericalError(std::string(what) + " hazard fit did not converge");
    }
    HazardModel model;
    model.K = K;
    model.first_interval = first_interval;
    model.coef = fit.coef;
    model.ridged = fit.ridged;
    model.rows = static_cast<long>(rows.size());
    return model;
}

}  // namespace

double HazardModel::predict(int k, const Eigen::VectorXd& l, bool prior_events) const {
    if (k < first_interval) {
        return 0.0;
    }
    if (k > K) {
        throw ConfigError("hazard prediction beyond the grid");
    }
    const int n_intervals = K - first_interval + 1;
    double lp = coef(k - first_interval);
    lp += l.dot(coef.segment(n_intervals, l.size()));
    if (prior_events) {
        lp += coef(coef.size() - 1);
    }
    return expit(lp);
}

HazardModel fit_treatment_hazard(const PanelGrid& panel) {
    std::vector<HazardRow> rows;
    const long n = static_cast<long>(panel.n());
    for (long i = 0; i < n; ++i) {
        const SubjectPanel& subject = panel.subjects[static_cast<std::size_t>(i)];
        for (int k = 1; k <= subject.n_rows(); ++k) {
            const bool treated_entering = k >= 2 && subject.rows[static_cast<std::size_t>(k - 2)].a == 1;
            if (treated_entering) {
                break;  // switching is absorbing; later intervals are off the risk set
            }
            HazardRow row;
            row.subject = i;
            row.k = k;
            row.lag_events = subject.y_lag(k) > 0;
            row.outcome = subject.rows[static_cast<std::size_t>(k - 1)].a == 1 ? 1.0 : 0.0;
            rows.push_back(row);
        }
    }
    return fit_hazard_rows(panel, rows, 1, "treatment");
}

HazardModel fit_censoring_hazard(const PanelGrid& panel) {
    std::vector<HazardRow> rows;
    const long n = static_cast<long>(panel.n());
    for (long i = 0; i < n; ++i) {
        const SubjectPanel& subject = panel.subjects[static_cast<std::size_t>(i)];
        for (int k = 2; k <= subject.n_rows(); ++k) {
            HazardRow row;
            row.subject = i;
            row.k = k;
            row.lag_events = subject.y_at(k - 1) > 0;
            row.outcome = 0.0;
            rows.push_back(row);
        }
        if (subject.exit != ExitKind::none) {
            HazardRow row;
            row.subject = i;
            row.k = subject.exit_interval;
            row.lag_events = subject.y_at(subject.exit_interval - 1) > 0;
            row.outcome = subject.exit == ExitKind::censoring ? 1.0 : 0.0;
            rows.push_back(row);
        }
    }
    return fit_hazard_rows(panel, rows, 2, "censoring");
}

double switching_positivity(int s, const SubjectPanel& subject, const Eigen::VectorXd& l,
                            const HazardModel& treatment, const HazardModel& censoring) {
    if (s < 1 || s > treatment.K) {
        throw ConfigError("switch interval outside 1..K");
    }
    const int observed = subject.n_rows();
    auto lag_events = [&](int k) {
        if (k <= 1) {
            return false;
        }
        const int source = std::min(k - 1, observed);  // carry the last observed value forward
        return source >= 1 && subject.y_at(source) > 0;
    };
    double prob = treatment.predict(s, l, lag_events(s)) * (1.0 - censoring.predict(s, l, lag_events(s)));
    for (int k = 1; k < s; ++k) {
        prob *= (1.0 - treatment.predict(k, l, lag_events(k))) *
                (1.0 - censoring.predict(k, l, lag_events(k)));
    }
    return prob;
}

PositivityReport positivity_report(const PanelGrid& panel, const std::vector<int>& s_grid,
                                   double epsilon) {
    const long n = static_cast<long>(panel.n());
    if (n < 1) {
        throw DataError("positivity report needs at least one subject");
    }
    if (s_grid.empty()) {
        throw ConfigError("positivity report needs a non-empty switch-interval grid");
    }
    for (int s : s_grid) {
        if (s < 1 || s > panel.K) {
            throw ConfigError("positivity grid entry outside 1..K");
        }
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("positivity epsilon must be positive");
    }
    PositivityReport report;
    report.s_grid = s_grid;
    report.epsilon = epsilon;
    const HazardModel treatment = fit_treatment_hazard(panel);
    const HazardModel censoring = fit_censoring_hazard(panel);
    report.treatment_ridged = treatment.ridged;
    report.censoring_ridged = censoring.ridged;
    report.probabilities.resize(n, static_cast<long>(s_grid.size()));
    report.subject_ids.reserve(static_cast<std::size_t>(n));
    report.censoring_min.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const SubjectPanel& subject = panel.subjects[static_cast<std::size_t>(i)];
        report.subject_ids.push_back(subject.id);
        const Eigen::VectorXd l = panel.covariates.row(i);
        for (std::size_t j = 0; j < s_grid.size(); ++j) {
            report.probabilities(i, static_cast<long>(j)) =
                switching_positivity(s_grid[j], subject, l, treatment, censoring);
        }
        const int observed = subject.n_rows();
        double min_survival = 1.0;
        for (int k = 2; k <= panel.K; ++k) {
            const int source = std::min(k - 1, observed);
            const bool lag = source >= 1 && subject.y_at(source) > 0;
            min_survival = std::min(min_survival, 1.0 - censoring.predict(k, l, lag));
        }
        report.censoring_min.push_back(min_survival);
    }
    for (std::size_t j = 0; j < s_grid.size(); ++j) {
        std::vector<double> column(static_cast<std::size_t>(n));
        long below = 0;
        for (long i = 0; i < n; ++i) {
            column[static_cast<std::size_t>(i)] = report.probabilities(i, static_cast<long>(j));
            if (column[static_cast<std::size_t>(i)] < epsilon) {
                ++below;
            }
        }
        std::sort(column.begin(), column.end());
        PositivityBox box;
        box.s = s_grid[j];
        box.min = column.front();
        box.q1 = percentile(column, 0.25);
        box.median = percentile(column, 0.5);
        box.q3 = percentile(column, 0.75);
        box.max = column.back();
        box.frac_below_epsilon = static_cast<double>(below) / static_cast<double>(n);
        report.summaries.push_back(box);
        if (box.median < epsilon) {
            report.flagged_s.push_back(s_grid[j]);
        }
    }
    return report;
}

void write_positivity_csv(const PositivityReport& report, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(report.summaries.size());
    for (const PositivityBox& box : report.summaries) {
        rows.push_back({std::to_string(box.s), format_double(box.min), format_double(box.q1),
                        format_double(box.median), format_double(box.q3), format_double(box.max),
                        format_double(box.frac_below_epsilon)});
    }
    write_csv(path, {"s", "min", "q1", "median", "q3", "max", "frac_below_epsilon"}, rows);
}

void write_censoring_json(const PositivityReport& report, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["epsilon"] = report.epsilon;
    doc["flagged_s"] = report.flagged_s;
    doc["treatment_ridged"] = report.treatment_ridged;
    doc["censoring_ridged"] = report.censoring_ridged;
    nlohmann::json subjects = nlohmann::json::array();
    double overall = 1.0;
    for (std::size_t i = 0; i < report.subject_ids.size(); ++i) {
        subjects.push_back({{"id", report.subject_ids[i]},
                            {"min_censoring_survival", report.censoring_min[i]}});
        overall = std::min(overall, report.censoring_min[i]);
    }
    doc["subjects"] = subjects;
    doc["min_censoring_survival"] = overall;
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) {
            throw DataError("cannot open " + tmp.string() + " for writing");
        }
        out << doc.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace recurate
