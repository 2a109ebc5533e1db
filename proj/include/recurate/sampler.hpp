#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "recurate/cohort.hpp"
#include "recurate/model.hpp"
#include "recurate/rng.hpp"

namespace recurate {

enum class Algorithm {
    adaptive_metropolis,
    hmc,
};

struct McmcConfig {
    int chains = 4;
    int warmup = 1000;
    int retained = 1000;  // total retained draws across all chains
    int thin = 4;         // post-warmup iterations per stored draw
    std::uint64_t seed = 1;
    Algorithm algorithm = Algorithm::hmc;
    int hmc_leapfrog_steps = 16;
    double target_accept = 0.0;  // 0 = algorithm default (0.234 blockwise RW, 0.8 HMC)
    double init_jitter = 0.1;    // per-chain start spread, unconstrained scale
};

struct PosteriorDraws {
    ParamLayout layout;
    std::vector<std::string> names;
    Eigen::MatrixXd draws;  // (chains * per_chain) x dim, chain-contiguous rows, natural scale
    int chains = 0;
    int per_chain = 0;
    std::vector<double> rhat;  // split R-hat per parameter
    std::vector<double> ess;   // effective sample size per parameter
    std::vector<std::string> block_names;
    std::vector<std::vector<double>> accept_rate;  // [chain][block]
    std::vector<std::string> flagged;              // parameters with split R-hat > 1.05

    int M() const { return chains * per_chain; }
    Params params_at(int m) const { return layout.unflatten(draws.row(m).transpose()); }
};

// Blockwise MCMC over the joint death/count model. Deterministic given (panel, spec, config).
PosteriorDraws sample_posterior(const PanelGrid& panel, const ModelSpec& spec,
                                const McmcConfig& config);

// Convergence statistics over chain-contiguous draw matrices (one column per parameter).
// Both split each chain in half; R-hat follows the rank-free split formulation, ESS combines
// per-sequence autocovariances with Geyer initial-positive-pair truncation.
std::vector<double> split_rhat(const Eigen::MatrixXd& draws, int chains);
std::vector<double> effective_sample_size(const Eigen::MatrixXd& draws, int chains);

// Single-block adaptive random-walk Metropolis on an arbitrary log density. Step size follows
// a Robbins-Monro recursion toward target_accept and the proposal covariance is learned from
// warmup history; both freeze when warmup ends. Returns keep rows of post-warmup draws.
Eigen::MatrixXd adaptive_metropolis_sample(
    const std::function<double(const Eigen::VectorXd&)>& logpdf, const Eigen::VectorXd& x0,
    int warmup, int keep, RngStream& rng, double target_accept = 0.234,
    double* accept_rate_out = nullptr);

void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path);
void write_diagnostics_json(const PosteriorDraws& draws, const std::filesystem::path& path);

// Inverse of write_draws_csv: rebuilds a draw container (convergence statistics recomputed)
// for downstream g-computation. The header must match the layout implied by spec exactly.
PosteriorDraws load_draws_csv(const std::filesystem::path& path, const ModelSpec& spec);

}  // namespace recurate
