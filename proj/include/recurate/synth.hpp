#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recurate/cohort.hpp"
#include "recurate/rng.hpp"
#include "recurate/sampler.hpp"

namespace recurate {

// Generative law for synthetic cohorts. Covariates are two Bernoulli columns followed by
// three standard normals. Within each interval the order of play is: treatment switch
// (hazard depends on covariates, the interval index, and an any-events-last-interval
// indicator), then the event count (log-linear in covariates, current treatment, and the
// lagged any-event indicator), then the competing exits (censoring on baseline covariates only,
// then death). Continuous timestamps are placed at fixed fractions of the interval so the
// grid representation is recovered exactly: switches before events before exits. Death
// carries no treatment or event-history effect, which keeps the fitted hazard's
// time-alignment of the treatment indicator exact for data that exist in continuous time.
struct DgpConfig {
    std::string label = "custom";
    long n = 500;
    int K = 12;
    double tau = 12.0;
    std::uint64_t seed = 1;

    double p_bin1 = 0.5;  // first binary covariate
    double p_bin2 = 0.3;  // second binary covariate

    double death_intercept = -3.2;   // logit scale, constant over intervals
    Eigen::VectorXd death_cov;       // length 5

    double count_intercept = 0.3;    // log scale
    double count_treat = -0.4;
    double count_lag = 0.25;         // on the lagged any-event indicator
    Eigen::VectorXd count_cov;

    double switch_intercept = -1.4;  // logit scale at interval 1
    double switch_slope = -0.25;     // linear trend in (k - 1)
    double switch_lag = 0.6;         // any-events-last-interval indicator
    Eigen::VectorXd switch_cov;

    double censor_intercept = -2.8;  // logit scale, baseline covariates only
    Eigen::VectorXd censor_cov;

    // Placement fractions inside an interval for the continuous timestamps.
    double switch_frac = 0.25;
    double event_frac = 0.5;
    double exit_frac = 0.9;

    int n_covariates() const { return 5; }
};

// Frozen presets: a moderate-censoring cohort where switching is front-loaded, and a
// heavy-censoring cohort with a persistent switching tail and stronger event-history
// feedback in both the counts and the switching process.
DgpConfig setting1_config();
DgpConfig setting2_config();

DgpConfig load_dgp_json(const std::filesystem::path& path);
void write_dgp_json(const DgpConfig& dgp, const std::filesystem::path& path);

CohortData generate_dataset(const DgpConfig& dgp);
CohortData generate_dataset(const DgpConfig& dgp, std::uint64_t seed);
CohortData generate_dataset(const DgpConfig& dgp, const RngStream& root);

struct TruthEstimate {
    double value = 0.0;
    double mc_se = 0.0;
    long replications = 0;
};

// Monte Carlo evaluation of the incidence-rate contrast between switch intervals s and
// s_prime under the generative law with censoring removed. Regime arms share one random
// stream per replication, so the s == s_prime contrast is exactly zero.
TruthEstimate true_psi(const DgpConfig& dgp, int s, int s_prime, long replications,
                       std::uint64_t seed = 1);

enum class Method { bayes_gar1, freq_glm, grace_period, ever_never };

std::string method_name(Method m);

struct SimStudyConfig {
    long replications = 200;
    int s = 6;
    int s_prime = 13;
    int grace_g = 6;
    McmcConfig mcmc;
    long gcomp_B = 50;
    long bootstrap_M = 500;
    long truth_replications = 1000000;
    std::uint64_t seed = 1;
    std::vector<Method> methods = {Method::bayes_gar1, Method::freq_glm, Method::grace_period,
                                   Method::ever_never};
    std::filesystem::path checkpoint_dir;  // when set, per-replication results are persisted
};

struct MethodMetrics {
    std::string method;
    long completed = 0;
    long failed = 0;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double pct_bias = 0.0;       // 100 * bias / |truth|
    double rel_bias = 0.0;       // |bias| / |bias of the joint-model estimator|
    double variance = 0.0;
    double rel_variance = 0.0;
    double mse = 0.0;
    double rel_mse = 0.0;
    double mean_width = 0.0;
    double coverage = 0.0;
};

struct RepRecord {
    long rep = 0;
    std::string method;
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool ok = false;
    std::string message;
};

struct SimStudyResult {
    std::string label;
    long replications = 0;
    TruthEstimate truth;
    std::vector<MethodMetrics> metrics;
    std::vector<RepRecord> records;
};

SimStudyResult run_simulation_study(const DgpConfig& dgp, const SimStudyConfig& config);

// Operating-characteristics table, one row per method.
void write_sim_table_csv(const SimStudyResult& result, const std::filesystem::path& path);

// Per-replication audit trail with the truth and its Monte Carlo error.
void write_sim_audit_json(const SimStudyResult& result, const std::filesystem::path& path);

}  // namespace recurate
