#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

namespace recurate {

// One subject's continuous-time observed data. All times are measured from
// eligibility (time zero) in the same unit as the followup window.
struct SubjectRecord {
    std::string id;
    std::vector<double> covariates;   // numeric design values, aligned with CohortData::covariate_names
    double switch_time = 0.0;         // earliest of treatment switch and end of followup
    bool switched = false;            // switch observed strictly before end_time
    double end_time = 0.0;            // first of death, censoring, or window end
    bool died = false;                // end_time is a death
    std::vector<double> event_times;  // sorted nondecreasing, each strictly before end_time
};

struct CohortData {
    std::vector<std::string> covariate_names;  // after one-hot expansion: numeric columns only
    std::vector<SubjectRecord> records;
};

struct ValidationIssue {
    std::string subject_id;
    std::string message;
};

// Report-only invariant checks; empty result means every record is well formed.
std::vector<ValidationIssue> validate(const std::vector<SubjectRecord>& records);

enum class ExitKind { none, death, censoring };

// One at-risk interval: the subject is alive and uncensored at its start.
struct PanelRow {
    int k = 0;   // 1-based interval index
    int a = 0;   // treatment switched by the interval end
    long y = 0;  // events observed during the interval
};

struct SubjectPanel {
    std::string id;
    std::vector<PanelRow> rows;      // contiguous k = 1..rows.size()
    ExitKind exit = ExitKind::none;  // exit observed inside the grid
    int exit_interval = 0;           // first interval entered dead/censored (2..K); 0 if none
    int exit_a = 0;                  // treatment status by the end of the exit interval (descriptive)

    long y_at(int k) const { return rows[static_cast<std::size_t>(k) - 1].y; }
    // No history before interval 1.
    long y_lag(int k) const { return k <= 1 ? 0 : y_at(k - 1); }
    // Treatment status entering the transition into interval k: switched by the end of
    // interval k - 1. Death transitions condition on this value rather than on a_k
    // itself, because a_k is only fully realized by subjects who survive interval k --
    // conditioning on it would attribute the extra switch opportunities of survivors
    // to the treatment (an immortal-time artifact).
    int a_lag(int k) const { return k <= 1 ? 0 : rows[static_cast<std::size_t>(k) - 2].a; }
    int n_rows() const { return static_cast<int>(rows.size()); }
};

struct PanelGrid {
    int K = 0;
    double tau = 0.0;
    std::vector<std::string> covariate_names;
    Eigen::MatrixXd covariates;  // n x p; row i belongs to subjects[i]
    std::vector<SubjectPanel> subjects;

    std::size_t n() const { return subjects.size(); }
    int p() const { return static_cast<int>(covariates.cols()); }
    long at_risk(int k) const;    // subjects alive and uncensored at the start of interval k
    long deaths_at(int k) const;  // death transitions firing at the start of interval k
    long censored_at(int k) const;
};

// Partition [0, tau) into K equal half-open intervals and apply the indicator
// definitions: death/censoring status keyed to interval starts, treatment to
// interval ends, counts to events falling inside each interval. A subject
// contributes a row for every interval at whose start they are alive and
// uncensored; an exit during the final interval is coarsened away.
PanelGrid discretize(const CohortData& cohort, int K, double tau);

// Subjects CSV (id, covariate columns, switch_time, switched, end_time, died)
// plus events CSV (id, event_time). Categorical covariate columns are one-hot
// expanded with the lexicographically first level as the dropped reference.
CohortData load_cohort(const std::filesystem::path& subjects_csv,
                       const std::filesystem::path& events_csv);

// Long format (id, k, T, C, A, Y): at-risk rows carry T = C = 0; a subject
// with an in-grid exit gets one closing row with T or C set and Y = 0.
void write_panel_csv(const PanelGrid& grid, const std::filesystem::path& path);

// Inverse of load_cohort for numeric covariates: emits the subjects and events
// CSVs in the exact schema load_cohort ingests.
void write_cohort_csv(const CohortData& cohort, const std::filesystem::path& subjects_csv,
                      const std::filesystem::path& events_csv);

}  // namespace recurate
