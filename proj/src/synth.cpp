#include "recurate/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "recurate/comparators.hpp"
#include "recurate/csv.hpp"
#include "recurate/errors.hpp"
#include "recurate/gcomp.hpp"
#include "recurate/model.hpp"
#include "recurate/stats.hpp"

namespace recurate {

namespace {

constexpr std::uint64_t kTagDataset = 4;
constexpr std::uint64_t kTagMethod = 5;
constexpr std::uint64_t kTagTruth = 7;

void check_dgp(const DgpConfig& dgp) {
    if (dgp.n < 1) throw ConfigError("cohort size must be positive");
    if (dgp.K < 2) throw ConfigError("grid needs at least two intervals");
    if (!(dgp.tau > 0.0)) throw ConfigError("followup window must be positive");
    if (!(dgp.p_bin1 > 0.0 && dgp.p_bin1 < 1.0 && dgp.p_bin2 > 0.0 && dgp.p_bin2 < 1.0))
        throw ConfigError("binary covariate frequencies must lie strictly inside (0, 1)");
    const int p = dgp.n_covariates();
    if (dgp.death_cov.size() != p || dgp.count_cov.size() != p || dgp.switch_cov.size() != p ||
        dgp.censor_cov.size() != p)
        throw ConfigError("covariate coefficient vectors must have length 5");
    auto inside = [](double f) { return f > 0.0 && f < 1.0; };
    if (!inside(dgp.switch_frac) || !inside(dgp.event_frac) || !inside(dgp.exit_frac))
        throw ConfigError("placement fractions must lie strictly inside (0, 1)");
    if (!(dgp.switch_frac < dgp.exit_frac) || !(dgp.event_frac < dgp.exit_frac))
        throw ConfigError("switches and events must be placed before exits within an interval");
}

double switch_hazard(const DgpConfig& dgp, int k, const Eigen::VectorXd& l, bool lag_events) {
    return expit(dgp.switch_intercept + dgp.switch_slope * (k - 1) + dgp.switch_cov.dot(l) +
                 (lag_events ? dgp.switch_lag : 0.0));
}

double censor_hazard(const DgpConfig& dgp, const Eigen::VectorXd& l) {
    return expit(dgp.censor_intercept + dgp.censor_cov.dot(l));
}

double death_hazard(const DgpConfig& dgp, const Eigen::VectorXd& l) {
    return expit(dgp.death_intercept + dgp.death_cov.dot(l));
}

double count_mean_true(const DgpConfig& dgp, const Eigen::VectorXd& l, int a, long y_lag) {
    // History enters through the positive indicator: a raw-count lag inside an
    // exponential mean is explosive under positive feedback.
    return std::exp(dgp.count_intercept + dgp.count_cov.dot(l) + dgp.count_treat * a +
                    dgp.count_lag * (y_lag > 0 ? 1.0 : 0.0));
}

Eigen::VectorXd draw_covariates(const DgpConfig& dgp, RngStream& rng) {
    Eigen::VectorXd l(5);
    l(0) = rng.bernoulli(dgp.p_bin1) ? 1.0 : 0.0;
    l(1) = rng.bernoulli(dgp.p_bin2) ? 1.0 : 0.0;
    l(2) = rng.normal();
    l(3) = rng.normal();
    l(4) = rng.normal();
    return l;
}

}  // namespace

DgpConfig setting1_config() {
    DgpConfig dgp;
    dgp.label = "setting1";
    dgp.n = 500;
    dgp.K = 12;
    dgp.tau = 12.0;
    // Moderate censoring, front-loaded switching with a thin tail past the grace horizon.
    dgp.death_intercept = -3.05;
    dgp.death_cov = (Eigen::VectorXd(5) << 0.45, -0.25, 0.35, 0.0, 0.0).finished();
    dgp.count_intercept = 0.35;
    dgp.count_treat = -0.45;
    dgp.count_lag = 0.25;
    dgp.count_cov = (Eigen::VectorXd(5) << 0.4, 0.25, 0.3, -0.2, 0.0).finished();
    // Switching selects heavily on the same covariates and event history that drive the
    // counts, so naive contrasts that classify by observed switching are confounded.
    dgp.switch_intercept = -1.7;
    dgp.switch_slope = -0.25;
    dgp.switch_lag = 1.6;
    dgp.switch_cov = (Eigen::VectorXd(5) << 1.0, 0.6, 0.75, -0.5, 0.3).finished();
    dgp.censor_intercept = -3.0;
    dgp.censor_cov = (Eigen::VectorXd(5) << 0.3, 0.0, 0.25, 0.2, 0.0).finished();
    return dgp;
}

DgpConfig setting2_config() {
    DgpConfig dgp;
    dgp.label = "setting2";
    dgp.n = 500;
    dgp.K = 12;
    dgp.tau = 12.0;
    // Heavy censoring, fewer deaths, a persistent switching tail, and stronger
    // event-history feedback in both the counts and the switching process.
    dgp.death_intercept = -3.45;
    dgp.death_cov = (Eigen::VectorXd(5) << 0.4, -0.2, 0.3, 0.0, 0.0).finished();
    dgp.count_intercept = 0.45;
    dgp.count_treat = -0.5;
    dgp.count_lag = 0.40;
    dgp.count_cov = (Eigen::VectorXd(5) << 0.45, 0.3, 0.35, -0.25, 0.0).finished();
    // Slow, persistent switching driven by the event-rate covariates rather than by
    // event history: a sizable share of switches land after the grace horizon, and the
    // grace-time classification inherits the covariate and survivor selection without
    // the history-selection channel that would pull its contrast back toward the truth.
    dgp.switch_intercept = -3.0;
    dgp.switch_slope = -0.02;
    dgp.switch_lag = 0.0;
    dgp.switch_cov = (Eigen::VectorXd(5) << 0.9, 0.5, 0.7, -0.45, 0.3).finished();
    dgp.censor_intercept = -2.2;
    dgp.censor_cov = (Eigen::VectorXd(5) << 0.35, 0.0, 0.3, 0.25, 0.0).finished();
    return dgp;
}

CohortData generate_dataset(const DgpConfig& dgp) { return generate_dataset(dgp, dgp.seed); }

CohortData generate_dataset(const DgpConfig& dgp, std::uint64_t seed) {
    return generate_dataset(dgp, RngStream(seed));
}

CohortData generate_dataset(const DgpConfig& dgp, const RngStream& root) {
    check_dgp(dgp);
    const double width = dgp.tau / dgp.K;
    CohortData cohort;
    cohort.covariate_names = {"b1", "b2", "x1", "x2", "x3"};
    cohort.records.reserve(static_cast<std::size_t>(dgp.n));
    for (long i = 0; i < dgp.n; ++i) {
        RngStream rng = root.fold(static_cast<std::uint64_t>(i));
        const Eigen::VectorXd l = draw_covariates(dgp, rng);
        SubjectRecord rec;
        rec.id = "s" + std::to_string(i + 1);
        rec.covariates.assign(l.data(), l.data() + l.size());
        bool switched = false;
        long y_prev = 0;
        bool exited = false;
        for (int k = 1; k <= dgp.K && !exited; ++k) {
            const double start = width * (k - 1);
            if (!switched && rng.bernoulli(switch_hazard(dgp, k, l, y_prev > 0))) {
                switched = true;
                rec.switch_time = start + dgp.switch_frac * width;
            }
            const long y = rng.poisson(count_mean_true(dgp, l, switched ? 1 : 0, y_prev));
            for (long e = 0; e < y; ++e) {
                rec.event_times.push_back(start + dgp.event_frac * width *
                                                      static_cast<double>(e + 1) /
                                                      static_cast<double>(y + 1));
            }
            y_prev = y;
            if (rng.bernoulli(censor_hazard(dgp, l))) {
                rec.end_time = start + dgp.exit_frac * width;
                rec.died = false;
                exited = true;
            } else if (rng.bernoulli(death_hazard(dgp, l))) {
                rec.end_time = start + dgp.exit_frac * width;
                rec.died = true;
                exited = true;
            }
        }
        if (!exited) {
            rec.end_time = dgp.tau;
            rec.died = false;
        }
        rec.switched = switched;
        if (!switched) {
            rec.switch_time = rec.end_time;
        }
        cohort.records.push_back(std::move(rec));
    }
    return cohort;
}

TruthEstimate true_psi(const DgpConfig& dgp, int s, int s_prime, long replications,
                       std::uint64_t seed) {
    check_dgp(dgp);
    if (s < 1 || s > dgp.K + 1 || s_prime < 1 || s_prime > dgp.K + 1)
        throw ConfigError("switch interval outside 1..K+1");
    if (replications < 2) throw ConfigError("truth evaluation needs at least two replications");
    const RngStream root = RngStream(seed).fold(kTagTruth);
    RunningMoments diff;
    for (long r = 0; r < replications; ++r) {
        const RngStream rep = root.fold(static_cast<std::uint64_t>(r));
        RngStream cov_rng = rep.fold(0);
        const Eigen::VectorXd l = draw_covariates(dgp, cov_rng);
        auto arm_rate = [&](int arm) {
            RngStream rng = rep.fold(static_cast<std::uint64_t>(arm));
            long total = 0;
            long alive = dgp.K;
            long y_prev = 0;
            for (int k = 1; k <= dgp.K; ++k) {
                if (k >= 2 && rng.bernoulli(death_hazard(dgp, l))) {
                    alive = k - 1;
                    break;
                }
                const long y = rng.poisson(count_mean_true(dgp, l, k >= arm ? 1 : 0, y_prev));
                total += y;
                y_prev = y;
            }
            return static_cast<double>(total) / static_cast<double>(alive);
        };
        diff.add(arm_rate(s) - arm_rate(s_prime));
    }
    TruthEstimate truth;
    truth.value = diff.mean;
    truth.mc_se = diff.sd() / std::sqrt(static_cast<double>(replications));
    truth.replications = replications;
    return truth;
}

std::string method_name(Method m) {
    switch (m) {
        case Method::bayes_gar1: return "bayes_gar1";
        case Method::freq_glm: return "freq_glm";
        case Method::grace_period: return "grace_period";
        case Method::ever_never: return "ever_never";
    }
    throw ConfigError("unknown method");
}

namespace {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t rep, std::uint64_t tag) {
    RngStream s = RngStream(base).fold(kTagMethod).fold(rep).fold(tag);
    return s.next_u64();
}

nlohmann::json study_config_json(const DgpConfig& dgp, const SimStudyConfig& config) {
    nlohmann::json doc;
    doc["label"] = dgp.label;
    doc["n"] = dgp.n;
    doc["K"] = dgp.K;
    doc["replications"] = config.replications;
    doc["s"] = config.s;
    doc["s_prime"] = config.s_prime;
    doc["grace_g"] = config.grace_g;
    doc["gcomp_B"] = config.gcomp_B;
    doc["bootstrap_M"] = config.bootstrap_M;
    doc["truth_replications"] = config.truth_replications;
    doc["seed"] = config.seed;
    doc["mcmc"] = {{"chains", config.mcmc.chains},
                   {"warmup", config.mcmc.warmup},
                   {"retained", config.mcmc.retained},
                   {"thin", config.mcmc.thin},
                   {"algorithm",
                    config.mcmc.algorithm == Algorithm::adaptive_metropolis ? "adaptive_metropolis"
                                                                            : "hmc"}};
    std::vector<std::string> names;
    for (Method m : config.methods) names.push_back(method_name(m));
    doc["methods"] = names;
    return doc;
}

}  // namespace

SimStudyResult run_simulation_study(const DgpConfig& dgp, const SimStudyConfig& config) {
    check_dgp(dgp);
    if (config.replications < 1) throw ConfigError("study needs at least one replication");
    if (config.methods.empty()) throw ConfigError("study needs at least one method");
    if (config.s < 1 || config.s > dgp.K + 1 || config.s_prime < 1 || config.s_prime > dgp.K + 1)
        throw ConfigError("switch interval outside 1..K+1");
    if (config.grace_g < 1 || config.grace_g > dgp.K)
        throw ConfigError("grace horizon outside 1..K");
    if (config.gcomp_B < 1) throw ConfigError("g-computation replicate count must be positive");
    if (config.bootstrap_M < 1) throw ConfigError("bootstrap replicate count must be positive");

    SimStudyResult result;
    result.label = dgp.label;
    result.replications = config.replications;
    result.truth = true_psi(dgp, config.s, config.s_prime, config.truth_replications, config.seed);

    // Optional checkpointing: one JSON line per finished (replication, method) pair, so an
    // interrupted study resumes where it stopped instead of recomputing hours of work.
    std::set<std::pair<long, std::string>> done;
    std::filesystem::path rep_log;
    std::ofstream log_out;
    if (!config.checkpoint_dir.empty()) {
        std::filesystem::create_directories(config.checkpoint_dir);
        const std::filesystem::path config_path = config.checkpoint_dir / "study_config.json";
        const std::string wanted = study_config_json(dgp, config).dump(2);
        if (std::filesystem::exists(config_path)) {
            std::ifstream in(config_path);
            std::string existing((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
            if (existing != wanted + "\n")
                throw ConfigError("checkpoint directory belongs to a different study setup: " +
                                  config_path.string());
        } else {
            std::ofstream out(config_path);
            out << wanted << "\n";
        }
        rep_log = config.checkpoint_dir / "replications.jsonl";
        if (std::filesystem::exists(rep_log)) {
            std::ifstream in(rep_log);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                nlohmann::json row = nlohmann::json::parse(line);
                RepRecord rec;
                rec.rep = row.at("rep").get<long>();
                rec.method = row.at("method").get<std::string>();
                rec.estimate = row.at("estimate").get<double>();
                rec.lo = row.at("lo").get<double>();
                rec.hi = row.at("hi").get<double>();
                rec.ok = row.at("ok").get<bool>();
                rec.message = row.at("message").get<std::string>();
                done.insert({rec.rep, rec.method});
                result.records.push_back(std::move(rec));
            }
        }
        log_out.open(rep_log, std::ios::app);
        if (!log_out) throw DataError("cannot append to " + rep_log.string());
    }

    ModelSpec spec;
    spec.K = dgp.K;
    spec.count_family = CountFamily::poisson;
    spec.lag_transform = LagTransform::positive_indicator;
    spec.covariate_names = {"b1", "b2", "x1", "x2", "x3"};

    auto persist = [&](const RepRecord& rec) {
        result.records.push_back(rec);
        if (log_out.is_open()) {
            nlohmann::json row = {{"rep", rec.rep},     {"method", rec.method},
                                  {"estimate", rec.estimate}, {"lo", rec.lo},
                                  {"hi", rec.hi},       {"ok", rec.ok},
                                  {"message", rec.message}};
            log_out << row.dump() << "\n" << std::flush;
        }
    };

    for (long r = 1; r <= config.replications; ++r) {
        bool all_done = true;
        for (Method m : config.methods) {
            if (!done.count({r, method_name(m)})) {
                all_done = false;
                break;
            }
        }
        if (all_done) continue;
        const CohortData cohort =
            generate_dataset(dgp, RngStream(config.seed).fold(kTagDataset).fold(
                                      static_cast<std::uint64_t>(r)));
        const PanelGrid panel = discretize(cohort, dgp.K, dgp.tau);
        for (Method m : config.methods) {
            const std::string name = method_name(m);
            if (done.count({r, name})) continue;
            RepRecord rec;
            rec.rep = r;
            rec.method = name;
            try {
                switch (m) {
                    case Method::bayes_gar1: {
                        McmcConfig mc = config.mcmc;
                        mc.seed = derive_seed(config.seed, static_cast<std::uint64_t>(r), 0);
                        const PosteriorDraws draws = sample_posterior(panel, spec, mc);
                        const EstimandSummary est = estimate_psi(
                            draws, config.s, config.s_prime, panel.covariates, spec,
                            static_cast<int>(config.gcomp_B),
                            derive_seed(config.seed, static_cast<std::uint64_t>(r), 1));
                        rec.estimate = est.mean;
                        rec.lo = est.lo95;
                        rec.hi = est.hi95;
                        break;
                    }
                    case Method::freq_glm: {
                        const ComparatorResult res = freq_glm_gcomp(
                            panel, spec, config.s, config.s_prime,
                            static_cast<int>(config.bootstrap_M), static_cast<int>(config.gcomp_B),
                            derive_seed(config.seed, static_cast<std::uint64_t>(r), 2));
                        rec.estimate = res.estimate;
                        rec.lo = res.lo95;
                        rec.hi = res.hi95;
                        break;
                    }
                    case Method::grace_period: {
                        const ComparatorResult res = grace_period_estimate(
                            panel, config.grace_g, static_cast<int>(config.bootstrap_M),
                            derive_seed(config.seed, static_cast<std::uint64_t>(r), 3));
                        rec.estimate = res.estimate;
                        rec.lo = res.lo95;
                        rec.hi = res.hi95;
                        break;
                    }
                    case Method::ever_never: {
                        const ComparatorResult res = ever_never_estimate(
                            panel, static_cast<int>(config.bootstrap_M),
                            derive_seed(config.seed, static_cast<std::uint64_t>(r), 4));
                        rec.estimate = res.estimate;
                        rec.lo = res.lo95;
                        rec.hi = res.hi95;
                        break;
                    }
                }
                rec.ok = true;
            } catch (const std::exception& err) {
                rec.ok = false;
                rec.message = err.what();
            }
            persist(rec);
        }
    }

    // Operating characteristics per method, with the joint model as the relative baseline.
    std::map<std::string, std::vector<const RepRecord*>> by_method;
    for (const RepRecord& rec : result.records) by_method[rec.method].push_back(&rec);
    auto metrics_for = [&](const std::string& name) {
        MethodMetrics mm;
        mm.method = name;
        RunningMoments est;
        RunningMoments sqerr;
        RunningMoments width;
        long covered = 0;
        for (const RepRecord* rec : by_method[name]) {
            if (!rec->ok) {
                ++mm.failed;
                continue;
            }
            ++mm.completed;
            est.add(rec->estimate);
            const double e = rec->estimate - result.truth.value;
            sqerr.add(e * e);
            width.add(rec->hi - rec->lo);
            if (rec->lo <= result.truth.value && result.truth.value <= rec->hi) ++covered;
        }
        mm.mean_estimate = est.mean;
        mm.bias = est.mean - result.truth.value;
        mm.pct_bias = 100.0 * mm.bias / std::abs(result.truth.value);
        mm.variance = est.variance();
        mm.mse = sqerr.mean;
        mm.mean_width = width.mean;
        mm.coverage = mm.completed > 0
                          ? static_cast<double>(covered) / static_cast<double>(mm.completed)
                          : 0.0;
        return mm;
    };
    std::vector<MethodMetrics> metrics;
    for (Method m : config.methods) metrics.push_back(metrics_for(method_name(m)));
    const MethodMetrics* baseline = nullptr;
    for (const MethodMetrics& mm : metrics) {
        if (mm.method == method_name(Method::bayes_gar1)) baseline = &mm;
    }
    for (MethodMetrics& mm : metrics) {
        if (baseline != nullptr && baseline->completed > 0) {
            mm.rel_bias = std::abs(mm.bias) / std::abs(baseline->bias);
            mm.rel_variance = mm.variance / baseline->variance;
            mm.rel_mse = mm.mse / baseline->mse;
        } else {
            mm.rel_bias = std::numeric_limits<double>::quiet_NaN();
            mm.rel_variance = std::numeric_limits<double>::quiet_NaN();
            mm.rel_mse = std::numeric_limits<double>::quiet_NaN();
        }
    }
    result.metrics = std::move(metrics);
    return result;
}

void write_sim_table_csv(const SimStudyResult& result, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const MethodMetrics& mm : result.metrics) {
        rows.push_back({mm.method, std::to_string(mm.completed), std::to_string(mm.failed),
                        format_double(result.truth.value), format_double(result.truth.mc_se),
                        format_double(mm.mean_estimate), format_double(mm.bias),
                        format_double(mm.pct_bias), format_double(mm.rel_bias),
                        format_double(mm.variance), format_double(mm.rel_variance),
                        format_double(mm.mse), format_double(mm.rel_mse),
                        format_double(mm.mean_width), format_double(mm.coverage)});
    }
    write_csv(path,
              {"method", "replications", "failures", "truth", "truth_mc_se", "mean_estimate",
               "bias", "pct_bias", "rel_bias", "variance", "rel_variance", "mse", "rel_mse",
               "mean_ci_width", "coverage"},
              rows);
}

void write_sim_audit_json(const SimStudyResult& result, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["label"] = result.label;
    doc["replications"] = result.replications;
    doc["truth"] = {{"value", result.truth.value},
                    {"mc_se", result.truth.mc_se},
                    {"replications", result.truth.replications}};
    nlohmann::json records = nlohmann::json::array();
    for (const RepRecord& rec : result.records) {
        records.push_back({{"rep", rec.rep},
                           {"method", rec.method},
                           {"estimate", rec.estimate},
                           {"lo", rec.lo},
                           {"hi", rec.hi},
                           {"ok", rec.ok},
                           {"message", rec.message}});
    }
    doc["records"] = records;
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
        out << doc.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

namespace {

nlohmann::json dgp_to_json(const DgpConfig& dgp) {
    auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    nlohmann::json doc;
    doc["label"] = dgp.label;
    doc["n"] = dgp.n;
    doc["K"] = dgp.K;
    doc["tau"] = dgp.tau;
    doc["seed"] = dgp.seed;
    doc["p_bin1"] = dgp.p_bin1;
    doc["p_bin2"] = dgp.p_bin2;
    doc["death_intercept"] = dgp.death_intercept;
    doc["death_cov"] = vec(dgp.death_cov);
    doc["count_intercept"] = dgp.count_intercept;
    doc["count_treat"] = dgp.count_treat;
    doc["count_lag"] = dgp.count_lag;
    doc["count_cov"] = vec(dgp.count_cov);
    doc["switch_intercept"] = dgp.switch_intercept;
    doc["switch_slope"] = dgp.switch_slope;
    doc["switch_lag"] = dgp.switch_lag;
    doc["switch_cov"] = vec(dgp.switch_cov);
    doc["censor_intercept"] = dgp.censor_intercept;
    doc["censor_cov"] = vec(dgp.censor_cov);
    doc["switch_frac"] = dgp.switch_frac;
    doc["event_frac"] = dgp.event_frac;
    doc["exit_frac"] = dgp.exit_frac;
    return doc;
}

Eigen::VectorXd json_vec(const nlohmann::json& doc, const std::string& key) {
    const std::vector<double> v = doc.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

}  // namespace

DgpConfig load_dgp_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& err) {
        throw DataError("malformed JSON in " + path.string() + ": " + err.what());
    }
    DgpConfig dgp;
    try {
        if (doc.contains("label")) dgp.label = doc.at("label").get<std::string>();
        dgp.n = doc.at("n").get<long>();
        dgp.K = doc.at("K").get<int>();
        dgp.tau = doc.at("tau").get<double>();
        if (doc.contains("seed")) dgp.seed = doc.at("seed").get<std::uint64_t>();
        dgp.p_bin1 = doc.at("p_bin1").get<double>();
        dgp.p_bin2 = doc.at("p_bin2").get<double>();
        dgp.death_intercept = doc.at("death_intercept").get<double>();
        dgp.death_cov = json_vec(doc, "death_cov");
        dgp.count_intercept = doc.at("count_intercept").get<double>();
        dgp.count_treat = doc.at("count_treat").get<double>();
        dgp.count_lag = doc.at("count_lag").get<double>();
        dgp.count_cov = json_vec(doc, "count_cov");
        dgp.switch_intercept = doc.at("switch_intercept").get<double>();
        dgp.switch_slope = doc.at("switch_slope").get<double>();
        dgp.switch_lag = doc.at("switch_lag").get<double>();
        dgp.switch_cov = json_vec(doc, "switch_cov");
        dgp.censor_intercept = doc.at("censor_intercept").get<double>();
        dgp.censor_cov = json_vec(doc, "censor_cov");
        if (doc.contains("switch_frac")) dgp.switch_frac = doc.at("switch_frac").get<double>();
        if (doc.contains("event_frac")) dgp.event_frac = doc.at("event_frac").get<double>();
        if (doc.contains("exit_frac")) dgp.exit_frac = doc.at("exit_frac").get<double>();
    } catch (const nlohmann::json::exception& err) {
        throw ConfigError("generator config " + path.string() + ": " + err.what());
    }
    check_dgp(dgp);
    return dgp;
}

void write_dgp_json(const DgpConfig& dgp, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
        out << dgp_to_json(dgp).dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace recurate
