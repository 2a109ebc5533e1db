#include "recurate/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "recurate/comparators.hpp"
#include "recurate/csv.hpp"
#include "recurate/errors.hpp"
#include "recurate/stats.hpp"

namespace recurate {

namespace {

constexpr std::uint64_t kTagChain = 0x6368u;  // substream tag for per-chain RNG forks

// Adaptive random-walk proposal for one parameter block: Robbins-Monro step-size recursion
// plus a Welford-estimated covariance Cholesky factor. Adaptation must stop after warmup so
// the post-warmup kernel is a fixed Metropolis kernel.
class BlockSampler {
  public:
    // init_sd carries per-coordinate proposal scales (typically curvature-derived); an
    // identity geometry mixes hopelessly when coordinate scales span orders of magnitude.
    BlockSampler(const Eigen::VectorXd& init_sd, double target_accept)
        : dim_(static_cast<int>(init_sd.size())),
          target_(target_accept),
          log_scale_(std::log(2.38 / std::sqrt(static_cast<double>(std::max(1, dim_))))),
          mean_(Eigen::VectorXd::Zero(dim_)),
          m2_(Eigen::MatrixXd::Zero(dim_, dim_)),
          chol_(Eigen::MatrixXd(init_sd.asDiagonal())),
          init_var_(init_sd.array().square()) {}

    Eigen::VectorXd propose(const Eigen::VectorXd& x, RngStream& rng) {
        Eigen::VectorXd eps(dim_);
        for (int i = 0; i < dim_; ++i) eps[i] = rng.normal();
        return x + std::exp(log_scale_) * (chol_ * eps);
    }

    void record(bool accepted) {
        ++proposals_;
        if (accepted) ++accepts_;
    }

    // Call with the post-decision chain state; only during warmup.
    void adapt(const Eigen::VectorXd& x, bool accepted) {
        ++steps_;
        const double gamma = 1.0 / std::pow(static_cast<double>(steps_) + 10.0, 0.7);
        log_scale_ += gamma * ((accepted ? 1.0 : 0.0) - target_);
        log_scale_ = std::clamp(log_scale_, -15.0, 5.0);
        ++nobs_;
        Eigen::VectorXd d = x - mean_;
        mean_ += d / static_cast<double>(nobs_);
        m2_ += d * (x - mean_).transpose();
        // Refresh only once the chain has genuinely moved; a covariance taken from a
        // stuck chain is degenerate and would collapse the proposal.
        if (nobs_ >= 2 * dim_ + 10 && nobs_ % 100 == 0 && accepts_ >= dim_) {
            refresh_cholesky();
        }
    }

    double accept_rate() const {
        return proposals_ > 0 ? static_cast<double>(accepts_) / static_cast<double>(proposals_)
                              : 0.0;
    }

  private:
    void refresh_cholesky() {
        Eigen::MatrixXd cov = m2_ / static_cast<double>(nobs_ - 1);
        // Floor the diagonal with a slice of the initial geometry so a low-rank sample
        // covariance can never drive the proposal to zero.
        cov.diagonal() += (0.01 * init_var_).matrix();
        cov.diagonal().array() += 1e-12;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() == Eigen::Success) chol_ = llt.matrixL();
    }

    int dim_;
    double target_;
    double log_scale_;
    long steps_ = 0;
    long accepts_ = 0;
    long proposals_ = 0;
    long nobs_ = 0;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd m2_;
    Eigen::MatrixXd chol_;
    Eigen::ArrayXd init_var_;
};

// Unconstrained-space view of the posterior. rho entries map through tanh, sigma and
// dispersion through exp; block log densities include exactly the terms that vary with the
// block's coordinates (shared terms cancel in within-block Metropolis ratios).
struct Target {
    const PanelGrid& panel;
    const ModelSpec& spec;
    ParamLayout layout;
    bool nb;

    Target(const PanelGrid& panel_in, const ModelSpec& spec_in)
        : panel(panel_in),
          spec(spec_in),
          layout(spec_in),
          nb(spec_in.count_family == CountFamily::negative_binomial) {}

    Eigen::VectorXd constrain(const Eigen::VectorXd& z) const {
        Eigen::VectorXd v = z;
        v[layout.beta_rho()] = std::tanh(z[layout.beta_rho()]);
        v[layout.beta_sigma()] = std::exp(z[layout.beta_sigma()]);
        v[layout.theta_rho()] = std::tanh(z[layout.theta_rho()]);
        v[layout.theta_sigma()] = std::exp(z[layout.theta_sigma()]);
        if (nb) v[layout.dispersion()] = std::exp(z[layout.dispersion()]);
        return v;
    }

    Eigen::VectorXd unconstrain(const Eigen::VectorXd& v) const {
        Eigen::VectorXd z = v;
        z[layout.beta_rho()] = std::atanh(v[layout.beta_rho()]);
        z[layout.beta_sigma()] = std::log(v[layout.beta_sigma()]);
        z[layout.theta_rho()] = std::atanh(v[layout.theta_rho()]);
        z[layout.theta_sigma()] = std::log(v[layout.theta_sigma()]);
        if (nb) z[layout.dispersion()] = std::log(v[layout.dispersion()]);
        return z;
    }

    Params params(const Eigen::VectorXd& z) const { return layout.unflatten(constrain(z)); }

    // log|dv/dz| pieces, each attributed to the block owning the coordinate.
    double jac_beta_hyper(const Eigen::VectorXd& z) const {
        const double rho = std::tanh(z[layout.beta_rho()]);
        return std::log1p(-rho * rho) + z[layout.beta_sigma()];
    }
    double jac_theta_hyper(const Eigen::VectorXd& z) const {
        const double rho = std::tanh(z[layout.theta_rho()]);
        return std::log1p(-rho * rho) + z[layout.theta_sigma()];
    }
    double jac_dispersion(const Eigen::VectorXd& z) const {
        return nb ? z[layout.dispersion()] : 0.0;
    }

    double block_logpdf(int block, const Eigen::VectorXd& z) const {
        const Params p = params(z);
        switch (block) {
            case 0:
                return death_loglik(panel, p, spec) + beta_side_log_prior(p, spec);
            case 1:
                return beta_side_log_prior(p, spec) + jac_beta_hyper(z);
            case 2:
                return count_loglik(panel, p, spec) + theta_side_log_prior(p, spec) +
                       jac_dispersion(z);
            case 3:
                return theta_side_log_prior(p, spec) + jac_theta_hyper(z);
            default:
                throw ConfigError("unknown sampler block");
        }
    }

    double full_logpdf(const Eigen::VectorXd& z) const {
        const Params p = params(z);
        return log_posterior(panel, p, spec) + jac_beta_hyper(z) + jac_theta_hyper(z) +
               jac_dispersion(z);
    }

    // Gradient of full_logpdf via the natural-scale gradient plus transform corrections.
    Eigen::VectorXd grad(const Eigen::VectorXd& z) const {
        const Params p = params(z);
        Eigen::VectorXd g = grad_log_posterior(panel, p, spec);
        const double rho_b = p.beta_h.rho;
        const double rho_t = p.theta_h.rho;
        g[layout.beta_rho()] = g[layout.beta_rho()] * (1.0 - rho_b * rho_b) - 2.0 * rho_b;
        g[layout.theta_rho()] = g[layout.theta_rho()] * (1.0 - rho_t * rho_t) - 2.0 * rho_t;
        g[layout.beta_sigma()] = g[layout.beta_sigma()] * p.beta_h.sigma + 1.0;
        g[layout.theta_sigma()] = g[layout.theta_sigma()] * p.theta_h.sigma + 1.0;
        if (nb) g[layout.dispersion()] = g[layout.dispersion()] * p.dispersion + 1.0;
        return g;
    }

    std::vector<std::vector<int>> block_indices() const {
        std::vector<std::vector<int>> blocks(4);
        for (int k = 1; k <= layout.K; ++k) blocks[0].push_back(layout.beta0(k));
        for (int j = 0; j < layout.p; ++j) blocks[0].push_back(layout.betaL(j));
        blocks[0].push_back(layout.betaY());
        blocks[0].push_back(layout.betaA());
        blocks[1] = {layout.beta_mean(), layout.beta_rho(), layout.beta_sigma()};
        for (int k = 1; k <= layout.K; ++k) blocks[2].push_back(layout.theta0(k));
        for (int j = 0; j < layout.p; ++j) blocks[2].push_back(layout.thetaL(j));
        blocks[2].push_back(layout.thetaY());
        blocks[2].push_back(layout.thetaA());
        if (nb) blocks[2].push_back(layout.dispersion());
        blocks[3] = {layout.theta_mean(), layout.theta_rho(), layout.theta_sigma()};
        return blocks;
    }
};

// Moment-matched smoothing hyperparameters for a fitted intercept series, kept strictly
// inside the prior support so the unconstraining transform stays finite.
Gar1Hyper series_hyper(const Eigen::VectorXd& x, double sigma_max) {
    Gar1Hyper h;
    const auto K = x.size();
    h.mean = x.mean();
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
        const double c = x[k] - h.mean;
        den += c * c;
        if (k > 0) num += c * (x[k - 1] - h.mean);
    }
    h.rho = den > 0.0 ? std::clamp(num / den, -0.9, 0.9) : 0.0;
    const double sd = K > 1 ? std::sqrt(den / static_cast<double>(K - 1)) : 0.3;
    h.sigma = std::clamp(sd, 0.05 * sigma_max, 0.9 * sigma_max);
    return h;
}

// Chains start at the unsmoothed maximum-likelihood fit when it exists, so warmup is
// spent adapting proposal scales rather than locating the high-probability region.
// Sparse panels where the per-interval MLE is undefined fall back to pooled empirical
// rates for the intercept series with everything else at the prior center; either way
// chains disagree only through their jitter.
Params initial_params(const PanelGrid& panel, const ModelSpec& spec) {
    const MleFit mle = fit_mle(panel, spec);
    if (mle.ok) {
        Params p = mle.params;
        p.beta_h = series_hyper(p.beta0, spec.sigma_max);
        p.theta_h = series_hyper(p.theta0, spec.sigma_max);
        if (!(p.dispersion > 0.0)) p.dispersion = 1.0;
        return p;
    }
    long deaths = 0;
    long transitions = 0;
    long events = 0;
    long rows = 0;
    for (const auto& s : panel.subjects) {
        const int r = s.n_rows();
        rows += r;
        for (const auto& row : s.rows) events += row.y;
        if (r >= 1) transitions += r - 1;
        if (s.exit == ExitKind::death && s.exit_interval >= 2) {
            transitions += 1;
            deaths += 1;
        }
    }
    double lam = transitions > 0 ? static_cast<double>(deaths) / static_cast<double>(transitions)
                                 : 0.05;
    lam = std::clamp(lam, 1e-3, 1.0 - 1e-3);
    double rate = rows > 0 ? static_cast<double>(events) / static_cast<double>(rows) : 0.1;
    rate = std::clamp(rate, 1e-3, 1e3);

    Params p = make_zero_params(spec);
    p.beta0.setConstant(logit(lam));
    p.theta0.setConstant(std::log(rate));
    p.beta_h = Gar1Hyper{0.0, 0.0, 1.0};
    p.theta_h = Gar1Hyper{0.0, 0.0, 1.0};
    p.dispersion = 1.0;
    return p;
}

std::string trace_excerpt(const Target& target, const Eigen::VectorXd& z) {
    std::ostringstream oss;
    oss.precision(6);
    for (int b = 0; b < 4; ++b) {
        oss << " block" << b << "=" << target.block_logpdf(b, z);
    }
    oss << "; z[0:4]=";
    for (int i = 0; i < std::min<int>(4, static_cast<int>(z.size())); ++i) {
        oss << (i ? "," : "") << z[i];
    }
    return oss.str();
}

Eigen::VectorXd jittered_start(const Target& target, const Eigen::VectorXd& z0, double jitter,
                               RngStream& rng) {
    double scale = jitter;
    for (int attempt = 0; attempt < 10; ++attempt) {
        Eigen::VectorXd z = z0;
        for (int i = 0; i < z.size(); ++i) z[i] += scale * rng.normal();
        bool finite = true;
        for (int b = 0; b < 4 && finite; ++b) {
            finite = std::isfinite(target.block_logpdf(b, z));
        }
        if (finite) return z;
        scale *= 0.5;
    }
    if (std::isfinite(target.full_logpdf(z0))) return z0;
    throw NumericalError("posterior is not finite at any attempted starting point;" +
                         trace_excerpt(target, z0));
}

// Per-coordinate proposal scales from the negated second derivative of the log target
// at the start point, estimated by central differences of the analytic gradient.
// Coordinates with non-concave or negligible curvature fall back to a unit scale.
Eigen::VectorXd curvature_scales(const Target& target, const Eigen::VectorXd& z) {
    const double h = 1e-4;
    Eigen::VectorXd sd(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        Eigen::VectorXd zp = z;
        Eigen::VectorXd zm = z;
        zp[j] += h;
        zm[j] -= h;
        const double gp = target.grad(zp)[j];
        const double gm = target.grad(zm)[j];
        double scale = 1.0;
        if (std::isfinite(gp) && std::isfinite(gm)) {
            const double second = (gp - gm) / (2.0 * h);
            if (second < -1e-8) scale = 1.0 / std::sqrt(-second);
        }
        sd[j] = std::clamp(scale, 1e-3, 2.0);
    }
    return sd;
}

void run_chain_blockwise(const Target& target, Eigen::VectorXd z, int warmup, int keep,
                         int thin, double target_accept, RngStream& rng, Eigen::MatrixXd& out,
                         int first_row, std::vector<double>& accept_out) {
    const auto blocks = target.block_indices();
    const Eigen::VectorXd scales = curvature_scales(target, z);
    std::vector<BlockSampler> samplers;
    for (int b = 0; b < 4; ++b) {
        const auto dim = static_cast<int>(blocks[b].size());
        Eigen::VectorXd block_sd(dim);
        for (int i = 0; i < dim; ++i) block_sd[i] = scales[blocks[b][static_cast<std::size_t>(i)]];
        const double tgt = target_accept > 0.0 ? target_accept : (dim == 1 ? 0.44 : 0.234);
        samplers.emplace_back(block_sd, tgt);
        if (!std::isfinite(target.block_logpdf(b, z))) {
            throw NumericalError("posterior block is not finite at the chain start;" +
                                 trace_excerpt(target, z));
        }
    }

    // The data likelihoods depend only on their own coefficient blocks, so they are the only
    // cacheable pieces; prior terms are cheap and recomputed every move.
    Params cur = target.params(z);
    double cached_death = death_loglik(target.panel, cur, target.spec);
    double cached_count = count_loglik(target.panel, cur, target.spec);

    auto prior_part = [&](int b, const Params& p, const Eigen::VectorXd& zv) {
        switch (b) {
            case 0:
                return beta_side_log_prior(p, target.spec);
            case 1:
                return beta_side_log_prior(p, target.spec) + target.jac_beta_hyper(zv);
            case 2:
                return theta_side_log_prior(p, target.spec) + target.jac_dispersion(zv);
            default:
                return theta_side_log_prior(p, target.spec) + target.jac_theta_hyper(zv);
        }
    };

    Eigen::VectorXd z_prop = z;
    for (int iter = 0; iter < warmup + keep * thin; ++iter) {
        const bool adapting = iter < warmup;
        for (int b = 0; b < 4; ++b) {
            const auto& idx = blocks[b];
            Eigen::VectorXd xb(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) xb[i] = z[idx[i]];
            const Eigen::VectorXd xb_prop = samplers[b].propose(xb, rng);
            z_prop = z;
            for (std::size_t i = 0; i < idx.size(); ++i) z_prop[idx[i]] = xb_prop[i];
            const Params prop = target.params(z_prop);
            double data_prop = 0.0;
            double data_cur = 0.0;
            if (b == 0) {
                data_prop = death_loglik(target.panel, prop, target.spec);
                data_cur = cached_death;
            } else if (b == 2) {
                data_prop = count_loglik(target.panel, prop, target.spec);
                data_cur = cached_count;
            }
            const double lp_prop = data_prop + prior_part(b, prop, z_prop);
            const double lp_cur = data_cur + prior_part(b, cur, z);
            bool accepted = false;
            if (std::isfinite(lp_prop)) {
                const double log_ratio = lp_prop - lp_cur;
                accepted = log_ratio >= 0.0 || rng.uniform_pos() < std::exp(log_ratio);
            }
            if (accepted) {
                z = z_prop;
                cur = prop;
                if (b == 0) cached_death = data_prop;
                if (b == 2) cached_count = data_prop;
            }
            samplers[b].record(accepted);
            if (adapting) {
                Eigen::VectorXd xb_now(idx.size());
                for (std::size_t i = 0; i < idx.size(); ++i) xb_now[i] = z[idx[i]];
                samplers[b].adapt(xb_now, accepted);
            }
        }
        if (!adapting && (iter - warmup + 1) % thin == 0) {
            out.row(first_row + (iter - warmup + 1) / thin - 1) = target.constrain(z).transpose();
        }
    }
    accept_out.clear();
    for (auto& s : samplers) accept_out.push_back(s.accept_rate());
}

void run_chain_hmc(const Target& target, Eigen::VectorXd z, int warmup, int keep,
                   int thin, double target_accept, int leapfrog_steps, RngStream& rng,
                   Eigen::MatrixXd& out, int first_row, std::vector<double>& accept_out) {
    const int dim = static_cast<int>(z.size());
    const double tgt = target_accept > 0.0 ? target_accept : 0.8;
    double log_eps = std::log(0.1 / std::pow(static_cast<double>(dim), 0.25));
    // Start from the local curvature so the first half of warmup explores with sane
    // per-coordinate step sizes; the mid-warmup refresh then re-estimates from samples.
    Eigen::VectorXd inv_mass = curvature_scales(target, z).array().square();

    double cur_lp = target.full_logpdf(z);
    if (!std::isfinite(cur_lp)) {
        throw NumericalError("posterior is not finite at the chain start;" +
                             trace_excerpt(target, z));
    }

    RunningMoments acc_stat;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(dim);
    long nobs = 0;
    long accepts = 0;
    long proposals = 0;

    for (int iter = 0; iter < warmup + keep * thin; ++iter) {
        const bool adapting = iter < warmup;
        const double eps = std::exp(log_eps);
        Eigen::VectorXd r(dim);
        for (int i = 0; i < dim; ++i) r[i] = rng.normal() / std::sqrt(inv_mass[i]);
        const double h_cur = -cur_lp + 0.5 * (r.array().square() * inv_mass.array()).sum();

        Eigen::VectorXd zq = z;
        Eigen::VectorXd rq = r;
        Eigen::VectorXd g = target.grad(zq);
        bool diverged = !g.allFinite();
        for (int step = 0; step < leapfrog_steps && !diverged; ++step) {
            rq += 0.5 * eps * g;
            zq += eps * (inv_mass.array() * rq.array()).matrix();
            g = target.grad(zq);
            if (!g.allFinite()) {
                diverged = true;
                break;
            }
            rq += 0.5 * eps * g;
        }

        bool accepted = false;
        double accept_prob = 0.0;
        if (!diverged) {
            const double lp_prop = target.full_logpdf(zq);
            if (std::isfinite(lp_prop)) {
                const double h_prop =
                    -lp_prop + 0.5 * (rq.array().square() * inv_mass.array()).sum();
                const double log_ratio = h_cur - h_prop;
                accept_prob = std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
                if (log_ratio >= 0.0 || rng.uniform_pos() < std::exp(log_ratio)) {
                    z = zq;
                    cur_lp = lp_prop;
                    accepted = true;
                }
            }
        }
        ++proposals;
        if (accepted) ++accepts;
        acc_stat.add(accept_prob);

        if (adapting) {
            const double gamma = 1.0 / std::pow(static_cast<double>(iter) + 11.0, 0.7);
            log_eps += gamma * (accept_prob - tgt);
            log_eps = std::clamp(log_eps, -12.0, 2.0);
            ++nobs;
            const Eigen::VectorXd d = z - mean;
            mean += d / static_cast<double>(nobs);
            m2 += d.cwiseProduct(z - mean);
            if (iter == warmup / 2 && nobs > 10) {
                const Eigen::VectorXd var = m2 / static_cast<double>(nobs - 1);
                for (int i = 0; i < dim; ++i) {
                    inv_mass[i] = std::clamp(var[i], 1e-6, 1e6);
                }
                mean.setZero();
                m2.setZero();
                nobs = 0;
            }
        } else if ((iter - warmup + 1) % thin == 0) {
            out.row(first_row + (iter - warmup + 1) / thin - 1) = target.constrain(z).transpose();
        }
    }
    accept_out.assign(1, proposals > 0 ? static_cast<double>(accepts) /
                                             static_cast<double>(proposals)
                                       : 0.0);
}

// m split sequences of length n for each chain; per_chain rows per chain, halves drop the
// middle row when per_chain is odd.
struct SplitView {
    int m = 0;
    int n = 0;
    std::vector<int> starts;  // row offsets into the draw matrix, one per sequence
};

SplitView make_split(int total_rows, int chains) {
    if (chains < 2) throw ConfigError("convergence diagnostics require at least 2 chains");
    if (total_rows % chains != 0) {
        throw ConfigError("draw matrix rows are not divisible by the chain count");
    }
    const int per_chain = total_rows / chains;
    const int half = per_chain / 2;
    if (half < 2) throw ConfigError("too few draws per chain for split diagnostics");
    SplitView view;
    view.m = 2 * chains;
    view.n = half;
    for (int c = 0; c < chains; ++c) {
        view.starts.push_back(c * per_chain);
        view.starts.push_back(c * per_chain + per_chain - half);
    }
    return view;
}

}  // namespace

std::vector<double> split_rhat(const Eigen::MatrixXd& draws, int chains) {
    const SplitView view = make_split(static_cast<int>(draws.rows()), chains);
    const double n = static_cast<double>(view.n);
    std::vector<double> out(static_cast<std::size_t>(draws.cols()));
    for (int col = 0; col < draws.cols(); ++col) {
        std::vector<double> means(view.m);
        std::vector<double> vars(view.m);
        for (int j = 0; j < view.m; ++j) {
            const auto seq = draws.col(col).segment(view.starts[j], view.n);
            means[j] = seq.mean();
            vars[j] = (seq.array() - means[j]).square().sum() / (n - 1.0);
        }
        double w = 0.0;
        for (double v : vars) w += v;
        w /= view.m;
        double grand = 0.0;
        for (double mu : means) grand += mu;
        grand /= view.m;
        double b_over_n = 0.0;
        for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
        b_over_n /= (view.m - 1);
        const double var_plus = (n - 1.0) / n * w + b_over_n;
        if (w <= 0.0) {
            out[col] = b_over_n > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
        } else {
            out[col] = std::sqrt(var_plus / w);
        }
    }
    return out;
}

std::vector<double> effective_sample_size(const Eigen::MatrixXd& draws, int chains) {
    const SplitView view = make_split(static_cast<int>(draws.rows()), chains);
    const int n = view.n;
    const int m = view.m;
    std::vector<double> out(static_cast<std::size_t>(draws.cols()));
    std::vector<Eigen::VectorXd> centered(m);
    for (int col = 0; col < draws.cols(); ++col) {
        double w = 0.0;
        std::vector<double> means(m);
        for (int j = 0; j < m; ++j) {
            const auto seq = draws.col(col).segment(view.starts[j], n);
            means[j] = seq.mean();
            centered[j] = seq.array() - means[j];
            w += centered[j].squaredNorm() / (n - 1.0);
        }
        w /= m;
        double grand = 0.0;
        for (double mu : means) grand += mu;
        grand /= m;
        double b_over_n = 0.0;
        for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
        b_over_n /= (m - 1);
        const double var_plus = (n - 1.0) / static_cast<double>(n) * w + b_over_n;
        if (!(var_plus > 0.0)) {
            out[col] = static_cast<double>(m) * n;
            continue;
        }

        auto rho_at = [&](int t) {
            double acv = 0.0;
            for (int j = 0; j < m; ++j) {
                acv += centered[j].head(n - t).dot(centered[j].tail(n - t));
            }
            acv /= static_cast<double>(m) * n;
            return 1.0 - (w - acv) / var_plus;
        };

        const double rho0 = rho_at(0);
        double sum_pairs = 0.0;
        double prev_pair = std::numeric_limits<double>::infinity();
        for (int t = 0; t + 1 < n; t += 2) {
            double pair = rho_at(t) + rho_at(t + 1);
            if (pair <= 0.0) break;
            pair = std::min(pair, prev_pair);
            sum_pairs += pair;
            prev_pair = pair;
        }
        double tau = 2.0 * sum_pairs - 2.0 * rho0 + 1.0;
        tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m) * n + 10.0));
        out[col] = std::min(static_cast<double>(m) * n / tau,
                            static_cast<double>(m) * n * 10.0);
    }
    return out;
}

Eigen::MatrixXd adaptive_metropolis_sample(
    const std::function<double(const Eigen::VectorXd&)>& logpdf, const Eigen::VectorXd& x0,
    int warmup, int keep, RngStream& rng, double target_accept, double* accept_rate_out) {
    if (warmup < 0 || keep <= 0) throw ConfigError("warmup must be >= 0 and keep > 0");
    const int dim = static_cast<int>(x0.size());
    BlockSampler sampler(Eigen::VectorXd::Ones(dim), target_accept);
    Eigen::VectorXd x = x0;
    double lp = logpdf(x);
    if (!std::isfinite(lp)) {
        throw NumericalError("target density is not finite at the starting point");
    }
    Eigen::MatrixXd out(keep, dim);
    for (int iter = 0; iter < warmup + keep; ++iter) {
        const Eigen::VectorXd prop = sampler.propose(x, rng);
        const double lp_prop = logpdf(prop);
        bool accepted = false;
        if (std::isfinite(lp_prop)) {
            const double log_ratio = lp_prop - lp;
            accepted = log_ratio >= 0.0 || rng.uniform_pos() < std::exp(log_ratio);
        }
        if (accepted) {
            x = prop;
            lp = lp_prop;
        }
        sampler.record(accepted);
        if (iter < warmup) sampler.adapt(x, accepted);
        if (iter >= warmup) out.row(iter - warmup) = x.transpose();
    }
    if (accept_rate_out != nullptr) *accept_rate_out = sampler.accept_rate();
    return out;
}

PosteriorDraws sample_posterior(const PanelGrid& panel, const ModelSpec& spec,
                                const McmcConfig& config) {
    if (panel.subjects.empty()) throw ConfigError("cannot fit an empty panel");
    if (config.chains < 2) throw ConfigError("need at least 2 chains");
    if (config.warmup < 1) throw ConfigError("warmup must be positive");
    if (config.retained < 100) throw ConfigError("need at least 100 retained draws in total");
    if (config.thin < 1) throw ConfigError("thin must be at least 1");
    if (config.hmc_leapfrog_steps < 1) throw ConfigError("leapfrog step count must be positive");

    Target target(panel, spec);
    const int dim = target.layout.dim();
    const int per_chain = (config.retained + config.chains - 1) / config.chains;

    PosteriorDraws result;
    result.layout = target.layout;
    result.names = target.layout.names(spec.covariate_names);
    result.chains = config.chains;
    result.per_chain = per_chain;
    result.draws.resize(static_cast<Eigen::Index>(config.chains) * per_chain, dim);
    result.block_names =
        config.algorithm == Algorithm::hmc
            ? std::vector<std::string>{"hmc"}
            : std::vector<std::string>{"beta_coef", "beta_hyper", "theta_coef", "theta_hyper"};

    const Eigen::VectorXd z0 = target.unconstrain(target.layout.flatten(initial_params(panel, spec)));
    const RngStream root(config.seed);
    for (int c = 0; c < config.chains; ++c) {
        RngStream rng = root.fold(kTagChain).fold(static_cast<std::uint64_t>(c));
        const Eigen::VectorXd z_start = jittered_start(target, z0, config.init_jitter, rng);
        std::vector<double> accept;
        if (config.algorithm == Algorithm::hmc) {
            run_chain_hmc(target, z_start, config.warmup, per_chain, config.thin,
                          config.target_accept, config.hmc_leapfrog_steps, rng, result.draws,
                          c * per_chain, accept);
        } else {
            run_chain_blockwise(target, z_start, config.warmup, per_chain, config.thin,
                                config.target_accept, rng, result.draws, c * per_chain, accept);
        }
        result.accept_rate.push_back(accept);
    }

    result.rhat = split_rhat(result.draws, config.chains);
    result.ess = effective_sample_size(result.draws, config.chains);
    for (std::size_t i = 0; i < result.names.size(); ++i) {
        if (result.rhat[i] > 1.05) result.flagged.push_back(result.names[i]);
    }
    return result;
}

void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path) {
    std::vector<std::string> header;
    header.push_back("chain");
    header.push_back("iteration");
    for (const auto& name : draws.names) header.push_back(name);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(static_cast<std::size_t>(draws.draws.rows()));
    for (int m = 0; m < draws.draws.rows(); ++m) {
        std::vector<std::string> row;
        row.reserve(header.size());
        row.push_back(std::to_string(m / draws.per_chain));
        row.push_back(std::to_string(m % draws.per_chain));
        for (int j = 0; j < draws.draws.cols(); ++j) {
            row.push_back(format_double(draws.draws(m, j)));
        }
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

void write_diagnostics_json(const PosteriorDraws& draws, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["chains"] = draws.chains;
    doc["per_chain"] = draws.per_chain;
    doc["total_draws"] = draws.M();
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < draws.names.size(); ++i) {
        params.push_back({{"name", draws.names[i]},
                          {"rhat", draws.rhat[i]},
                          {"ess", draws.ess[i]}});
    }
    doc["parameters"] = params;
    nlohmann::json acc = nlohmann::json::object();
    for (std::size_t b = 0; b < draws.block_names.size(); ++b) {
        std::vector<double> per_chain;
        for (const auto& chain : draws.accept_rate) {
            per_chain.push_back(b < chain.size() ? chain[b] : 0.0);
        }
        acc[draws.block_names[b]] = per_chain;
    }
    doc["accept_rate"] = acc;
    doc["flagged"] = draws.flagged;
    doc["rhat_threshold"] = 1.05;

    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << doc.dump(2) << "\n";
}

PosteriorDraws load_draws_csv(const std::filesystem::path& path, const ModelSpec& spec) {
    const CsvTable table = read_csv(path);
    const ParamLayout layout(spec);
    const std::vector<std::string> names = layout.names(spec.covariate_names);
    if (table.header.size() != names.size() + 2 || table.header[0] != "chain" ||
        table.header[1] != "iteration") {
        throw DataError("draws file " + path.string() +
                        " does not match the expected chain/iteration/parameter layout");
    }
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (table.header[j + 2] != names[j]) {
            throw DataError("draws file " + path.string() + " column '" + table.header[j + 2] +
                            "' does not match expected parameter '" + names[j] + "'");
        }
    }
    if (table.rows.empty()) throw DataError("draws file " + path.string() + " has no draws");
    PosteriorDraws out;
    out.layout = layout;
    out.names = names;
    out.draws.resize(static_cast<long>(table.rows.size()), static_cast<long>(names.size()));
    int max_chain = 0;
    for (std::size_t m = 0; m < table.rows.size(); ++m) {
        const auto& row = table.rows[m];
        if (row.size() != table.header.size())
            throw DataError("draws file " + path.string() + " has a ragged row");
        max_chain = std::max(max_chain,
                             static_cast<int>(parse_long(row[0], "draws chain column")));
        for (std::size_t j = 0; j < names.size(); ++j) {
            out.draws(static_cast<long>(m), static_cast<long>(j)) =
                parse_double(row[j + 2], "draws value");
        }
    }
    out.chains = max_chain + 1;
    if (static_cast<int>(table.rows.size()) % out.chains != 0)
        throw DataError("draws file " + path.string() +
                        " row count is not divisible by the chain count");
    out.per_chain = static_cast<int>(table.rows.size()) / out.chains;
    if (out.chains >= 2 && out.per_chain >= 4) {
        out.rhat = split_rhat(out.draws, out.chains);
        out.ess = effective_sample_size(out.draws, out.chains);
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (out.rhat[j] > 1.05) out.flagged.push_back(names[j]);
        }
    }
    return out;
}

}  // namespace recurate
