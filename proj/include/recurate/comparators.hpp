#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recurate/cohort.hpp"
#include "recurate/glm.hpp"
#include "recurate/model.hpp"

namespace recurate {

struct ComparatorResult {
    std::string method;  // ever_never | grace_period | freq_glm
    double estimate = 0.0;
    double lo95 = 0.0;
    double hi95 = 0.0;
    std::vector<double> replicates;  // successful bootstrap values
    int requested_replicates = 0;
    int failures = 0;         // replicates that could not be estimated at all
    int ridged = 0;           // replicates that needed the ridge fallback
    bool unreliable = false;  // > 20% of replicates failed
    bool point_ridged = false;
};

// Naive ever-vs-never contrast: offset Poisson regression of per-subject totals on the
// ever-switched indicator, follow-up intervals as exposure. Severely biased by design.
ComparatorResult ever_never_estimate(const PanelGrid& panel, int bootstrap_M = 500,
                                     std::uint64_t seed = 1);

// Grace-period contrast: subjects still at risk past interval g, assigned by their observed
// treatment at g; covariate-adjusted offset Poisson on post-g data; predictions averaged
// under both assignments.
ComparatorResult grace_period_estimate(const PanelGrid& panel, int g, int bootstrap_M = 500,
                                       std::uint64_t seed = 1);

// Maximum-likelihood fit of the joint model with one free intercept per interval
// (no smoothing across intervals). beta0[1] is never used downstream (no death transition
// into interval 1) and is copied from the interval-2 estimate.
struct MleFit {
    Params params;
    bool ok = false;
    bool ridged = false;
    std::string message;
};

MleFit fit_mle(const PanelGrid& panel, const ModelSpec& spec);

// Frequentist analogue of the Bayesian pipeline: MLE + g-computation, subject-level
// bootstrap percentile interval.
ComparatorResult freq_glm_gcomp(const PanelGrid& panel, const ModelSpec& spec, int s,
                                int s_prime, int bootstrap_M = 500, int B = 50,
                                std::uint64_t seed = 1);

// Subject-level resample (all of a subject's rows move together).
PanelGrid resample_panel(const PanelGrid& panel, RngStream& rng);

void write_comparator_csv(const std::vector<ComparatorResult>& results,
                          const std::filesystem::path& path);

}  // namespace recurate
