// Python bindings: thin wrappers over the main library operations, enough to
// drive a full analysis (load, fit, contrast, diagnose, compare, synthesize)
// from Python without shelling out to the command-line tool.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "recurate/cohort.hpp"
#include "recurate/comparators.hpp"
#include "recurate/diagnostics.hpp"
#include "recurate/errors.hpp"
#include "recurate/gcomp.hpp"
#include "recurate/model.hpp"
#include "recurate/sampler.hpp"
#include "recurate/synth.hpp"
#include "recurate/version.hpp"

namespace py = pybind11;
using namespace recurate;

namespace {

ModelSpec build_spec(const PanelGrid& panel, const std::string& count_family,
                     const std::string& lag_transform) {
    ModelSpec spec;
    spec.K = panel.K;
    spec.covariate_names = panel.covariate_names;
    if (count_family == "poisson") {
        spec.count_family = CountFamily::poisson;
    } else if (count_family == "negative_binomial") {
        spec.count_family = CountFamily::negative_binomial;
    } else {
        throw ConfigError("count_family must be poisson or negative_binomial");
    }
    if (lag_transform == "raw_count") {
        spec.lag_transform = LagTransform::raw_count;
    } else if (lag_transform == "positive_indicator") {
        spec.lag_transform = LagTransform::positive_indicator;
    } else {
        throw ConfigError("lag_transform must be raw_count or positive_indicator");
    }
    return spec;
}

// Posterior draws plus the model description they were sampled under, so the
// downstream contrast step cannot be called with a mismatched specification.
struct FitResult {
    PosteriorDraws draws;
    ModelSpec spec;
};

DgpConfig resolve_dgp(const std::string& setting) {
    if (setting == "setting1" || setting == "1") return setting1_config();
    if (setting == "setting2" || setting == "2") return setting2_config();
    throw ConfigError("setting must be setting1 or setting2");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "recurrent-event incidence-rate contrasts under treatment-timing "
              "misalignment, right-censoring, and terminal death";
    m.attr("__version__") = kVersion;

    py::register_exception<ConfigError>(m, "ConfigurationError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<PanelGrid>(m, "Panel")
        .def_property_readonly("n", [](const PanelGrid& g) { return g.n(); })
        .def_property_readonly("K", [](const PanelGrid& g) { return g.K; })
        .def_property_readonly("tau", [](const PanelGrid& g) { return g.tau; })
        .def_property_readonly("covariate_names",
                               [](const PanelGrid& g) { return g.covariate_names; })
        .def_property_readonly("covariates", [](const PanelGrid& g) { return g.covariates; })
        .def("at_risk", &PanelGrid::at_risk, py::arg("k"))
        .def("deaths_at", &PanelGrid::deaths_at, py::arg("k"))
        .def("censored_at", &PanelGrid::censored_at, py::arg("k"))
        .def("__repr__", [](const PanelGrid& g) {
            return "<Panel n=" + std::to_string(g.n()) + " K=" + std::to_string(g.K) + ">";
        });

    m.def(
        "load_panel",
        [](const std::string& subjects, const std::string& events, int K, double tau) {
            CohortData cohort = load_cohort(subjects, events);
            const std::vector<ValidationIssue> issues = validate(cohort.records);
            if (!issues.empty())
                throw DataError("subject " + issues.front().subject_id + ": " +
                                issues.front().message + " (" + std::to_string(issues.size()) +
                                " issue(s) total)");
            return discretize(cohort, K, tau);
        },
        py::arg("subjects"), py::arg("events"), py::arg("K"), py::arg("tau"),
        "Load a cohort from subject and event CSV files and discretize it.");

    py::class_<FitResult>(m, "Fit")
        .def_property_readonly("draws", [](const FitResult& f) { return f.draws.draws; })
        .def_property_readonly("names", [](const FitResult& f) { return f.draws.names; })
        .def_property_readonly("rhat", [](const FitResult& f) { return f.draws.rhat; })
        .def_property_readonly("ess", [](const FitResult& f) { return f.draws.ess; })
        .def_property_readonly("flagged", [](const FitResult& f) { return f.draws.flagged; })
        .def_property_readonly("chains", [](const FitResult& f) { return f.draws.chains; })
        .def("__repr__", [](const FitResult& f) {
            return "<Fit draws=" + std::to_string(f.draws.M()) +
                   " params=" + std::to_string(f.draws.names.size()) + ">";
        });

    m.def(
        "fit",
        [](const PanelGrid& panel, const std::string& count_family,
           const std::string& lag_transform, int chains, int warmup, int retained, int thin,
           std::uint64_t seed, const std::string& algorithm) {
            FitResult out;
            out.spec = build_spec(panel, count_family, lag_transform);
            McmcConfig mc;
            mc.chains = chains;
            mc.warmup = warmup;
            mc.retained = retained;
            mc.thin = thin;
            mc.seed = seed;
            if (algorithm == "adaptive_metropolis") {
                mc.algorithm = Algorithm::adaptive_metropolis;
            } else if (algorithm == "hmc") {
                mc.algorithm = Algorithm::hmc;
            } else {
                throw ConfigError("algorithm must be adaptive_metropolis or hmc");
            }
            out.draws = sample_posterior(panel, out.spec, mc);
            return out;
        },
        py::arg("panel"), py::arg("count_family") = "poisson",
        py::arg("lag_transform") = "raw_count", py::arg("chains") = 4,
        py::arg("warmup") = 1000, py::arg("retained") = 1000, py::arg("thin") = 4,
        py::arg("seed") = 1, py::arg("algorithm") = "hmc",
        "Sample the joint death-hazard / count-process posterior.");

    m.def(
        "estimate_psi",
        [](const FitResult& fit, const PanelGrid& panel, int s, int s_prime, int B,
           std::uint64_t seed) {
            const EstimandSummary e =
                estimate_psi(fit.draws, s, s_prime, panel.covariates, fit.spec, B, seed);
            py::dict out;
            out["s"] = e.s;
            out["s_prime"] = e.s_prime;
            out["mean"] = e.mean;
            out["lo95"] = e.lo95;
            out["hi95"] = e.hi95;
            out["draws"] = e.psi;
            return out;
        },
        py::arg("fit"), py::arg("panel"), py::arg("s"), py::arg("s_prime"), py::arg("B") = 50,
        py::arg("seed") = 1,
        "Posterior incidence-rate difference between switch regimes s and s_prime.");

    m.def(
        "positivity",
        [](const PanelGrid& panel, const std::vector<int>& s_grid, double epsilon) {
            const PositivityReport rep = positivity_report(panel, s_grid, epsilon);
            py::list boxes;
            for (const PositivityBox& b : rep.summaries) {
                py::dict d;
                d["s"] = b.s;
                d["min"] = b.min;
                d["q1"] = b.q1;
                d["median"] = b.median;
                d["q3"] = b.q3;
                d["max"] = b.max;
                d["frac_below_epsilon"] = b.frac_below_epsilon;
                boxes.append(d);
            }
            py::dict out;
            out["boxes"] = boxes;
            out["flagged_s"] = rep.flagged_s;
            out["epsilon"] = rep.epsilon;
            out["min_censoring_survival"] = rep.censoring_min.empty()
                                                ? 1.0
                                                : *std::min_element(rep.censoring_min.begin(),
                                                                    rep.censoring_min.end());
            return out;
        },
        py::arg("panel"), py::arg("s_grid"), py::arg("epsilon") = 0.001,
        "Estimated probability of actually following each switch regime.");

    auto comparator_dict = [](const ComparatorResult& r) {
        py::dict d;
        d["method"] = r.method;
        d["estimate"] = r.estimate;
        d["lo95"] = r.lo95;
        d["hi95"] = r.hi95;
        d["failures"] = r.failures;
        d["unreliable"] = r.unreliable;
        return d;
    };
    m.def(
        "ever_never",
        [comparator_dict](const PanelGrid& panel, int bootstrap_M, std::uint64_t seed) {
            return comparator_dict(ever_never_estimate(panel, bootstrap_M, seed));
        },
        py::arg("panel"), py::arg("bootstrap_M") = 500, py::arg("seed") = 1);
    m.def(
        "grace_period",
        [comparator_dict](const PanelGrid& panel, int g, int bootstrap_M, std::uint64_t seed) {
            return comparator_dict(grace_period_estimate(panel, g, bootstrap_M, seed));
        },
        py::arg("panel"), py::arg("g"), py::arg("bootstrap_M") = 500, py::arg("seed") = 1);
    m.def(
        "freq_glm",
        [comparator_dict](const PanelGrid& panel, const std::string& count_family,
                          const std::string& lag_transform, int s, int s_prime, int bootstrap_M,
                          int B, std::uint64_t seed) {
            const ModelSpec spec = build_spec(panel, count_family, lag_transform);
            return comparator_dict(freq_glm_gcomp(panel, spec, s, s_prime, bootstrap_M, B, seed));
        },
        py::arg("panel"), py::arg("count_family"), py::arg("lag_transform"), py::arg("s"),
        py::arg("s_prime"), py::arg("bootstrap_M") = 500, py::arg("B") = 50, py::arg("seed") = 1);

    m.def(
        "generate_cohort",
        [](const std::string& setting, long n, std::uint64_t seed, const std::string& subjects,
           const std::string& events) {
            DgpConfig dgp = resolve_dgp(setting);
            if (n > 0) dgp.n = n;
            const CohortData cohort = generate_dataset(dgp, seed);
            write_cohort_csv(cohort, subjects, events);
            py::dict out;
            out["n"] = cohort.records.size();
            out["K"] = dgp.K;
            out["tau"] = dgp.tau;
            return out;
        },
        py::arg("setting"), py::arg("n"), py::arg("seed"), py::arg("subjects"),
        py::arg("events"), "Write a synthetic cohort to subject/event CSV files.");

    m.def(
        "true_contrast",
        [](const std::string& setting, int s, int s_prime, long replications,
           std::uint64_t seed) {
            const TruthEstimate t = true_psi(resolve_dgp(setting), s, s_prime, replications, seed);
            py::dict out;
            out["value"] = t.value;
            out["mc_se"] = t.mc_se;
            return out;
        },
        py::arg("setting"), py::arg("s"), py::arg("s_prime"), py::arg("replications") = 200000,
        py::arg("seed") = 1, "Monte Carlo ground-truth contrast for a synthetic setting.");
}
