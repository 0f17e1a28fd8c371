#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "clusterdr/cli.hpp"
#include "clusterdr/errors.hpp"
#include "clusterdr/io.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/rng.hpp"
#include "clusterdr/simulation.hpp"
#include "clusterdr/variance.hpp"
#include "clusterdr/version.hpp"

namespace py = pybind11;
using namespace clusterdr;

namespace {

py::object to_python(const nlohmann::ordered_json& j)
{
    return py::module_::import("json").attr("loads")(j.dump());
}

ClusteredDataset from_csv(const std::string& text)
{
    std::istringstream in(text);
    return read_dataset_csv(in);
}

std::string to_csv(const ClusteredDataset& data)
{
    std::ostringstream out;
    write_dataset_csv(out, data);
    return out.str();
}

py::tuple simulated(const SimulatedData& sim)
{
    return py::make_tuple(sim.dataset, sim.truth);
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Doubly robust estimation for clustered data with missing outcomes";
    m.attr("__version__") = std::string(kVersion);

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<EstimationError>(m, "EstimationError", PyExc_RuntimeError);
    py::register_exception<InvariantError>(m, "InvariantError", PyExc_AssertionError);

    py::class_<ClusteredDataset>(m, "Dataset")
        .def_static("from_csv", &from_csv, py::arg("text"))
        .def("to_csv", &to_csv)
        .def_property_readonly("num_clusters", &ClusteredDataset::num_clusters)
        .def_property_readonly("num_individuals", &ClusteredDataset::num_individuals)
        .def_property_readonly("cluster_sizes", [](const ClusteredDataset& d) { return cluster_sizes(d); })
        .def("__len__", &ClusteredDataset::num_individuals);

    m.def(
        "simulate_homogeneous",
        [](std::size_t n, std::uint64_t seed, std::uint64_t replication, double alpha) {
            HomogeneousDgp dgp;
            dgp.alpha = alpha;
            return simulated(gen_homogeneous(dgp, n, seed, replication));
        },
        py::arg("n"), py::arg("seed") = 1, py::arg("replication") = 0, py::arg("alpha") = 0.4);
    m.def(
        "simulate_quadratic",
        [](std::size_t n, std::size_t n_g, std::uint64_t seed, std::uint64_t replication) {
            return simulated(gen_quadratic(QuadraticDgp{}, n, n_g, seed, replication));
        },
        py::arg("n"), py::arg("n_g"), py::arg("seed") = 1, py::arg("replication") = 0);
    m.def(
        "simulate_sequential",
        [](std::size_t n, std::uint64_t seed, std::uint64_t replication) {
            return simulated(gen_sequential(SequentialDgp{}, n, seed, replication));
        },
        py::arg("n"), py::arg("seed") = 1, py::arg("replication") = 0);

    m.def(
        "estimate",
        [](const ClusteredDataset& data, const std::string& estimator, const std::string& variance,
           const std::string& propensity_map, const std::string& outcome_map, int folds, double clip_epsilon,
           std::uint64_t seed, double ci_level) {
            EstimatorSpec spec;
            spec.estimator = parse_estimator_kind(estimator);
            spec.cross_fit.folds = folds;
            spec.cross_fit.maps = {FeatureMap::parse(propensity_map), FeatureMap::parse(outcome_map)};
            spec.cross_fit.clip_epsilon = clip_epsilon;
            spec.cross_fit.seed = seed;
            if (spec.estimator == EstimatorKind::dr_sequential)
                spec.summary = SummaryConfig::max_min_mean();
            const auto est = evaluate_spec(data, spec);
            EstimateReport report;
            report.estimator = spec.estimator;
            report.theta_hat = est.theta_hat;
            report.n = data.num_individuals();
            report.G = data.num_clusters();
            report.ci_level = ci_level;
            report.variance_method = parse_variance_method(variance);
            std::optional<VarianceReport> v;
            if (report.variance_method == VarianceMethod::iid)
                v = var_iid(est.contributions, est.theta_hat);
            else if (report.variance_method == VarianceMethod::cluster_robust)
                v = var_cluster_robust(est.contributions, est.theta_hat);
            else if (report.variance_method == VarianceMethod::cluster_bootstrap)
                v = cluster_bootstrap(data, spec, BootstrapOptions{500, BootstrapMode::fixed_nuisances, ci_level,
                                                                   derive_seed(seed, 1), 1})
                        .report;
            if (v) {
                report.variance = v->estimate_variance;
                report.degenerate_variance = v->degenerate_flag;
                if (!v->degenerate_flag)
                    report.ci = wald_ci(est.theta_hat, v->estimate_variance, ci_level);
            }
            return to_python(to_json(report));
        },
        py::arg("dataset"), py::arg("estimator") = "dr", py::arg("variance") = "cluster_robust",
        py::arg("propensity_map") = "linear", py::arg("outcome_map") = "linear", py::arg("folds") = 2,
        py::arg("clip_epsilon") = kDefaultClipEpsilon, py::arg("seed") = 0, py::arg("ci_level") = 0.95);

    m.def(
        "var_cluster_robust",
        [](const std::vector<std::vector<double>>& clusters, double theta_hat) {
            return to_python(to_json(var_cluster_robust(InfluencePanel::from_clusters(clusters), theta_hat)));
        },
        py::arg("clusters"), py::arg("theta_hat"));
    m.def(
        "var_iid",
        [](const std::vector<std::vector<double>>& clusters, double theta_hat) {
            return to_python(to_json(var_iid(InfluencePanel::from_clusters(clusters), theta_hat)));
        },
        py::arg("clusters"), py::arg("theta_hat"));
    m.def(
        "wald_ci",
        [](double theta_hat, double variance, double level) -> std::optional<std::pair<double, double>> {
            const auto ci = wald_ci(theta_hat, variance, level);
            if (!ci)
                return std::nullopt;
            return std::make_pair(ci->lower, ci->upper);
        },
        py::arg("theta_hat"), py::arg("variance"), py::arg("level") = 0.95);
    m.def("normal_quantile", &normal_quantile, py::arg("p"));

    m.def(
        "omega_scaling_diagnostic",
        [](const std::string& kind, double alpha, std::size_t reps, std::uint64_t seed,
           std::vector<std::size_t> n_grid) {
            OmegaDiagnosticOptions options;
            options.kind = parse_dependence_kind(kind);
            options.alpha = alpha;
            options.reps = reps;
            options.seed = seed;
            if (!n_grid.empty())
                options.n_grid = std::move(n_grid);
            OmegaDiagnosticReport report;
            {
                py::gil_scoped_release release;
                report = omega_scaling_diagnostic(options);
            }
            return to_python(to_json(report));
        },
        py::arg("kind"), py::arg("alpha") = 0.5, py::arg("reps") = 200, py::arg("seed") = 1,
        py::arg("n_grid") = std::vector<std::size_t>{});

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<std::string> full{"clusterdr"};
            full.insert(full.end(), args.begin(), args.end());
            std::vector<const char*> argv;
            for (const auto& a : full)
                argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run a clusterdr command; returns (exit_code, stdout, stderr).");
}
