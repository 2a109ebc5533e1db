#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "recurate/model.hpp"
#include "recurate/rng.hpp"
#include "recurate/sampler.hpp"

namespace recurate {

// Deterministic switch regime: treatment is 0 before interval s and 1 from s on.
// s = K+1 encodes never switching, s = 1 immediate switching.
struct Regime {
    int s = 1;
    int treatment(int k) const { return k >= s ? 1 : 0; }
};

Regime make_regime(int s, int K);  // validates s in 1..K+1

struct Trajectory {
    std::vector<long> y;  // event counts, 0 from the death interval on
    std::vector<int> t;   // absorbing death indicator, t[0] always 0
    long total_events = 0;
    int intervals_alive = 0;  // K - sum(t), always >= 1

    double rate() const { return static_cast<double>(total_events) / intervals_alive; }
};

// One counterfactual trajectory under the regime with censoring removed: for each interval,
// survive the death hazard (from interval 2 on), then emit a count while alive.
Trajectory simulate_trajectory(const Eigen::VectorXd& l, Regime regime, const Params& params,
                               const ModelSpec& spec, RngStream& rng);

// Monte Carlo mean of (sum Y) / (K - sum T) over B trajectories at covariate value l.
// Replicate b runs on substream stream.fold(b).fold(regime.s), so calls that share a stream
// and a regime reuse identical randomness.
double conditional_rate(const Eigen::VectorXd& l, Regime regime, const Params& params,
                        const ModelSpec& spec, int B, const RngStream& stream);

// Dirichlet(1,...,1) weights over n subjects.
Eigen::VectorXd bayesian_bootstrap_weights(std::size_t n, RngStream& rng);

// Weighted covariate average of the rate contrast for one parameter draw. Subject i uses
// substream stream.fold(i); the two regimes share it, so psi_draw(s, s) is exactly zero.
double psi_draw(int s, int s_prime, const Params& params, const Eigen::VectorXd& weights,
                const Eigen::MatrixXd& covariates, const ModelSpec& spec, int B,
                const RngStream& stream);

struct EstimandSummary {
    int s = 0;
    int s_prime = 0;
    std::vector<double> psi;  // one value per posterior draw
    double mean = 0.0;
    double lo95 = 0.0;
    double hi95 = 0.0;
    int B = 0;
    std::uint64_t seed = 0;
};

// Posterior distribution of the rate difference between regimes s and s_prime: one fresh
// Dirichlet weight vector and one g-computation pass per posterior draw.
EstimandSummary estimate_psi(const PosteriorDraws& draws, int s, int s_prime,
                             const Eigen::MatrixXd& covariates, const ModelSpec& spec,
                             int B = 50, std::uint64_t seed = 1);

struct AdaptiveBResult {
    int B = 0;
    bool converged = false;
    double last_delta = 0.0;
};

// Doubles B until successive psi approximations (equal subject weights, shared replicate
// streams) differ by less than precision; stops with converged = false past the cap.
AdaptiveBResult adaptive_B(const Params& params, int s, int s_prime,
                           const Eigen::MatrixXd& covariates, const ModelSpec& spec,
                           double precision = 1e-3, std::uint64_t seed = 1, int min_B = 50,
                           int cap = 100000);

struct OutcomePath {
    std::vector<long> y;
    std::vector<int> t;
    int death_interval = 0;  // 2..K for deaths inside the grid, K+1 for full survival
    double prob = 0.0;
    long total_events = 0;
    int intervals_alive = 0;
    double rate = 0.0;
};

// Exact enumeration of the trajectory law at covariate value l. Requires a capped count
// family and small instances (K <= 4, cap <= 5); probabilities sum to 1 within 1e-9.
std::vector<OutcomePath> gformula_pmf(const Params& params, const ModelSpec& spec, Regime regime,
                                      const Eigen::VectorXd& l);

double gformula_expected_rate(const std::vector<OutcomePath>& pmf);

// Exact rate contrast at one covariate value, from two enumerations.
double gformula_psi(const Params& params, const ModelSpec& spec, int s, int s_prime,
                    const Eigen::VectorXd& l);

void write_estimand_json(const std::vector<EstimandSummary>& estimates,
                         const std::filesystem::path& path);
// Plot-ready curve: one row per regime, columns s, posterior_mean, lo95, hi95.
void write_psi_grid_csv(const std::vector<EstimandSummary>& estimates,
                        const std::filesystem::path& path);

}  // namespace recurate
