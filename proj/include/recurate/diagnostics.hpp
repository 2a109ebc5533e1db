#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include "recurate/cohort.hpp"

namespace recurate {

// Logistic discrete-time hazard with one intercept per interval plus baseline covariates and
// a lagged any-event indicator. first_interval is 1 for the treatment-switch hazard (a switch
// can land in the first interval) and 2 for the censoring hazard (exits key to interval
// starts, so nothing can be censored into interval 1).
struct HazardModel {
    int K = 0;
    int first_interval = 1;
    Eigen::VectorXd coef;  // intervals first_interval..K, then covariates, then lag indicator
    bool ridged = false;
    long rows = 0;

    double predict(int k, const Eigen::VectorXd& l, bool prior_events) const;
};

// P(switch in interval k | untreated and at risk entering k, l, lagged event indicator).
HazardModel fit_treatment_hazard(const PanelGrid& panel);

// P(censored entering interval k | at risk through k-1, l, lagged event indicator).
HazardModel fit_censoring_hazard(const PanelGrid& panel);

// Probability of the observed-data event "switches exactly in interval s while remaining
// uncensored through s": lambda_s^A (1 - lambda_s^C) prod_{k<s} (1 - lambda_k^A)(1 - lambda_k^C),
// evaluated on the subject's covariates and observed history (last value carried forward past
// the subject's own follow-up).
double switching_positivity(int s, const SubjectPanel& subject, const Eigen::VectorXd& l,
                            const HazardModel& treatment, const HazardModel& censoring);

struct PositivityBox {
    int s = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double frac_below_epsilon = 0.0;
};

struct PositivityReport {
    std::vector<int> s_grid;
    std::vector<std::string> subject_ids;
    Eigen::MatrixXd probabilities;  // n x |s_grid|
    std::vector<PositivityBox> summaries;
    std::vector<int> flagged_s;  // median below epsilon
    double epsilon = 0.0;
    bool treatment_ridged = false;
    bool censoring_ridged = false;
    std::vector<double> censoring_min;  // per subject: min over k of (1 - lambda_k^C)
};

PositivityReport positivity_report(const PanelGrid& panel, const std::vector<int>& s_grid,
                                   double epsilon = 0.001);

// Boxplot-ready CSV: (s, min, q1, median, q3, max, frac_below_epsilon).
void write_positivity_csv(const PositivityReport& report, const std::filesystem::path& path);

// Censoring-check table plus flags as JSON.
void write_censoring_json(const PositivityReport& report, const std::filesystem::path& path);

}  // namespace recurate
