#include "clusterdr/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "clusterdr/errors.hpp"
#include "clusterdr/io.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/parallel.hpp"
#include "clusterdr/rng.hpp"
#include "clusterdr/simulation.hpp"
#include "clusterdr/variance.hpp"
#include "clusterdr/version.hpp"

namespace clusterdr::cli {

namespace {

using Json = nlohmann::ordered_json;

struct CommonFlags {
    std::string config_path;
    std::string data_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string format = "json";
};

// Reads typed fields from a JSON object and rejects keys nobody asked for.
class ConfigReader {
public:
    ConfigReader(const Json& node, std::string context) : node_(node), context_(std::move(context))
    {
        if (!node_.is_object())
            throw ValidationError(context_ + ": expected a JSON object");
    }

    template <class T>
    T get(const std::string& key, T fallback)
    {
        used_.insert(key);
        if (!node_.contains(key) || node_.at(key).is_null())
            return fallback;
        try {
            return node_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ValidationError(context_ + "." + key + ": wrong type");
        }
    }

    [[nodiscard]] bool has(const std::string& key) const { return node_.contains(key); }

    ConfigReader child(const std::string& key)
    {
        used_.insert(key);
        static const Json empty = Json::object();
        return ConfigReader(node_.contains(key) ? node_.at(key) : empty, context_ + "." + key);
    }

    const Json& raw(const std::string& key)
    {
        used_.insert(key);
        return node_.at(key);
    }

    void finish() const
    {
        for (const auto& item : node_.items())
            if (!used_.count(item.key()))
                throw ValidationError(context_ + ": unknown key '" + item.key() + "'");
    }

private:
    const Json& node_;
    std::string context_;
    std::set<std::string> used_;
};

Json load_config(const CommonFlags& flags)
{
    if (flags.config_path.empty())
        return Json::object();
    std::ifstream in(flags.config_path);
    if (!in)
        throw ValidationError("cannot open config file '" + flags.config_path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config file '" + flags.config_path + "' is not valid JSON: " + e.what());
    }
}

void require(bool condition, const std::string& message)
{
    if (!condition)
        throw ValidationError(message);
}

std::uint64_t resolve_seed(const CommonFlags& flags, ConfigReader& config)
{
    const auto from_config = config.get<std::uint64_t>("seed", 1);
    return flags.seed.value_or(from_config);
}

Json envelope(const std::string& command, const Json& config, std::uint64_t seed)
{
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["version"] = kVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    return j;
}

void check_finite(double value, const std::string& what)
{
    if (!std::isfinite(value))
        throw InvariantError(what + " is not finite");
}

void check_report(const EstimateReport& report)
{
    check_finite(report.theta_hat, "theta_hat");
    if (report.variance && !report.degenerate_variance && !(*report.variance >= 0.0))
        throw InvariantError("negative variance reported without the degenerate flag");
    if (report.ci) {
        const double tolerance = 1e-9 * std::max(1.0, std::fabs(report.theta_hat));
        const bool contains = report.ci->lower <= report.theta_hat && report.theta_hat <= report.ci->upper;
        const bool symmetric = std::fabs((report.theta_hat - report.ci->lower) -
                                         (report.ci->upper - report.theta_hat)) <= tolerance;
        if (!contains || !symmetric)
            throw InvariantError("confidence interval is not a Wald interval around theta_hat");
    }
}

void check_report(const MonteCarloReport& report, std::size_t expected_arms)
{
    if (report.arms.size() != expected_arms)
        throw InvariantError("Monte Carlo report has " + std::to_string(report.arms.size()) + " arms, expected " +
                             std::to_string(expected_arms));
    for (const auto& arm : report.arms) {
        check_finite(arm.value, arm.label);
        if (arm.metric == Metric::coverage && !(arm.value >= 0.0 && arm.value <= 1.0))
            throw InvariantError(arm.label + ": coverage outside [0, 1]");
        if (!(arm.value >= 0.0))
            throw InvariantError(arm.label + ": negative error metric");
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ValidationError("cannot write '" + path.string() + "'");
    out << text;
}

std::filesystem::path ensure_out_dir(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw ValidationError("cannot create output directory '" + dir + "': " + ec.message());
    return std::filesystem::path(dir);
}

// Emits a report: to files under --out (JSON + optional curves), else to
// stdout in the requested format.
void emit(const CommonFlags& flags, const Json& report, const std::string& curves, std::ostream& out)
{
    const std::string json_text = report.dump(2) + "\n";
    if (!flags.out_dir.empty()) {
        const auto dir = ensure_out_dir(flags.out_dir);
        write_text_file(dir / "report.json", json_text);
        if (!curves.empty())
            write_text_file(dir / "curves.csv", curves);
        return;
    }
    if (flags.format == "csv" && !curves.empty())
        out << curves;
    else
        out << json_text;
}

// ---------------------------------------------------------------------------
// estimate / bootstrap


std::function<double(std::span<const double>, std::span<const double>)> known_function(const Json& value,
                                                                                      bool propensity,
                                                                                      const std::string& key)
{
    if (value.is_number()) {
        const double c = value.get<double>();
        require(std::isfinite(c), key + " must be finite");
        if (propensity)
            require(c > 0.0 && c <= 1.0, key + " must lie in (0, 1]");
        return [c](std::span<const double>, std::span<const double>) { return c; };
    }
    require(value.is_string(), key + " must be a number or a DGP name");
    const std::string name = value.get<std::string>();
    KnownNuisance oracle;
    if (name == "homogeneous")
        oracle = HomogeneousDgp{}.oracle();
    else if (name == "quadratic")
        oracle = QuadraticDgp{}.oracle();
    else if (name == "sequential")
        oracle = SequentialDgp{}.oracle();
    else
        throw ValidationError(key + ": unknown oracle '" + name + "'");
    return propensity ? oracle.pi : oracle.mu;
}

SummaryConfig parse_summary(ConfigReader reader, Json& echo)
{
    SummaryConfig config;
    const auto components =
        reader.get<std::vector<std::string>>("components", {"running_max", "running_min", "running_mean"});
    for (const auto& c : components) {
        if (c == "running_max") config.running_max = true;
        else if (c == "running_min") config.running_min = true;
        else if (c == "running_mean") config.running_mean = true;
        else if (c == "last_d_window") config.last_d_window = true;
        else throw ValidationError("summary.components: unknown component '" + c + "'");
    }
    const auto window = reader.get<long long>("window_d", 1);
    require(window >= 1, "summary.window_d must be at least 1");
    config.window_d = static_cast<std::size_t>(window);
    config.include_past_ry = reader.get<bool>("include_past_ry", false);
    require(config.output_dim(1) > 0, "summary: no components selected");
    reader.finish();
    echo = to_json(config);
    return config;
}

struct EstimateSetup {
    EstimatorSpec spec;
    VarianceMethod variance = VarianceMethod::cluster_robust;
    double ci_level = 0.95;
    bool small_sample_correction = false;
    BootstrapOptions bootstrap;
    Json echo;
    std::uint64_t seed = 1;
};

EstimateSetup parse_estimate_config(const Json& root, const CommonFlags& flags, bool force_bootstrap)
{
    ConfigReader config(root, "config");
    EstimateSetup setup;
    Json& echo = setup.echo;
    setup.seed = resolve_seed(flags, config);

    setup.spec.estimator = parse_estimator_kind(config.get<std::string>("estimator", "dr"));
    echo["estimator"] = to_string(setup.spec.estimator);

    ConfigReader nuisance = config.child("nuisance");
    const std::string mode = nuisance.get<std::string>("mode", "cross_fit");
    require(mode == "cross_fit" || mode == "known", "nuisance.mode must be 'cross_fit' or 'known'");
    CrossFitOptions& cf = setup.spec.cross_fit;
    cf.maps.propensity = FeatureMap::parse(nuisance.get<std::string>("propensity_map", "linear"));
    cf.maps.outcome = FeatureMap::parse(nuisance.get<std::string>("outcome_map", "linear"));
    cf.folds = nuisance.get<int>("folds", 2);
    require(cf.folds >= 2, "nuisance.folds must be at least 2");
    cf.clip_epsilon = nuisance.get<double>("clip_epsilon", kDefaultClipEpsilon);
    require(cf.clip_epsilon > 0.0 && cf.clip_epsilon < 0.5, "nuisance.clip_epsilon must lie in (0, 0.5)");
    cf.seed = derive_seed(setup.seed, 0);
    Json nuisance_echo = {{"mode", mode},
                          {"propensity_map", cf.maps.propensity.name()},
                          {"outcome_map", cf.maps.outcome.name()},
                          {"folds", cf.folds},
                          {"clip_epsilon", cf.clip_epsilon}};
    if (mode == "known") {
        require(nuisance.has("known_pi") && nuisance.has("known_mu"),
                "nuisance.mode 'known' requires known_pi and known_mu");
        const Json& pi = nuisance.raw("known_pi");
        const Json& mu = nuisance.raw("known_mu");
        setup.spec.known = KnownNuisance{known_function(pi, true, "nuisance.known_pi"),
                                         known_function(mu, false, "nuisance.known_mu")};
        nuisance_echo["known_pi"] = pi;
        nuisance_echo["known_mu"] = mu;
    }
    nuisance.finish();
    echo["nuisance"] = nuisance_echo;

    if (setup.spec.estimator == EstimatorKind::dr_sequential || config.has("summary")) {
        Json summary_echo;
        setup.spec.summary = parse_summary(config.child("summary"), summary_echo);
        echo["summary"] = summary_echo;
    }

    setup.variance = force_bootstrap
                         ? VarianceMethod::cluster_bootstrap
                         : parse_variance_method(config.get<std::string>("variance", "cluster_robust"));
    echo["variance"] = to_string(setup.variance);
    setup.ci_level = config.get<double>("ci_level", 0.95);
    require(setup.ci_level > 0.0 && setup.ci_level < 1.0, "ci_level must lie in (0, 1)");
    echo["ci_level"] = setup.ci_level;
    setup.small_sample_correction = config.get<bool>("small_sample_correction", false);
    echo["small_sample_correction"] = setup.small_sample_correction;

    ConfigReader boot = config.child("bootstrap");
    const auto replicates = boot.get<long long>("replicates", 500);
    require(replicates >= 100, "bootstrap.replicates must be at least 100");
    setup.bootstrap.replicates = static_cast<std::size_t>(replicates);
    setup.bootstrap.mode = parse_bootstrap_mode(boot.get<std::string>("mode", "fixed_nuisances"));
    setup.bootstrap.ci_level = setup.ci_level;
    setup.bootstrap.seed = derive_seed(setup.seed, 1);
    setup.bootstrap.threads = resolve_threads(flags.threads);
    boot.finish();
    if (setup.variance == VarianceMethod::cluster_bootstrap)
        echo["bootstrap"] = {{"replicates", setup.bootstrap.replicates},
                             {"mode", to_string(setup.bootstrap.mode)}};
    config.finish();
    return setup;
}

int cmd_estimate(const CommonFlags& flags, bool force_bootstrap, std::ostream& out, std::ostream& err)
{
    const EstimateSetup setup = parse_estimate_config(load_config(flags), flags, force_bootstrap);
    require(!flags.data_path.empty(), "--data is required");
    const ClusteredDataset dataset = read_dataset_csv_file(flags.data_path);

    const SpecEstimate estimate = evaluate_spec(dataset, setup.spec);
    EstimateReport report;
    report.estimator = setup.spec.estimator;
    report.theta_hat = estimate.theta_hat;
    report.n = dataset.num_individuals();
    report.G = dataset.num_clusters();
    report.variance_method = setup.variance;
    report.ci_level = setup.ci_level;

    std::optional<VarianceReport> variance;
    switch (setup.variance) {
    case VarianceMethod::none:
        break;
    case VarianceMethod::iid:
        variance = var_iid(estimate.contributions, estimate.theta_hat);
        break;
    case VarianceMethod::cluster_robust:
        variance = var_cluster_robust(estimate.contributions, estimate.theta_hat,
                                      ClusterRobustOptions{setup.small_sample_correction});
        break;
    case VarianceMethod::cluster_bootstrap:
        variance = cluster_bootstrap(dataset, setup.spec, setup.bootstrap).report;
        break;
    }

    Json warnings = Json::array();
    if (setup.spec.known) {
        bool inconsistent = false;
        for (const auto& c : dataset.clusters())
            for (const auto& m : c.members)
                inconsistent = inconsistent || (!m.r && setup.spec.known->pi(c.x, m.w) >= 1.0);
        if (inconsistent)
            warnings.push_back("known propensity is 1 for individuals whose outcome is missing; "
                               "their contribution reduces to the known outcome regression");
    }
    if (variance) {
        report.variance = variance->estimate_variance;
        report.degenerate_variance = variance->degenerate_flag;
        if (variance->degenerate_flag)
            warnings.push_back("degenerate variance estimate (omega_hat <= 0); no confidence interval");
        else
            report.ci = wald_ci(report.theta_hat, variance->estimate_variance, setup.ci_level);
    }
    check_report(report);

    Json j = envelope(force_bootstrap ? "bootstrap" : "estimate", setup.echo, setup.seed);
    j["data"] = std::filesystem::path(flags.data_path).filename().string();
    j["report"] = to_json(report);
    j["variance_report"] = variance ? to_json(*variance) : Json();
    j["warnings"] = warnings;
    emit(flags, j, "", out);
    for (const auto& w : warnings)
        err << "warning: " << w.get<std::string>() << '\n';
    err << to_string(report.estimator) << ": theta_hat=" << format_double(report.theta_hat);
    if (report.ci)
        err << " ci=[" << format_double(report.ci->lower) << ", " << format_double(report.ci->upper) << "]";
    err << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------------------
// simulate

Eigen::Matrix2d parse_matrix2(const Json& value, const std::string& key)
{
    require(value.is_array() && value.size() == 2 && value[0].is_array() && value[0].size() == 2 &&
                value[1].is_array() && value[1].size() == 2,
            key + " must be a 2x2 nested array");
    Eigen::Matrix2d m;
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 2; ++k) {
            require(value[i][k].is_number(), key + " entries must be numbers");
            m(i, k) = value[i][k].get<double>();
        }
    return m;
}

Json matrix_json(const Eigen::Matrix2d& m)
{
    return Json::array({Json::array({m(0, 0), m(0, 1)}), Json::array({m(1, 0), m(1, 1)})});
}

HomogeneousDgp parse_homogeneous(ConfigReader reader, Json& echo)
{
    HomogeneousDgp dgp;
    dgp.rho = reader.get<double>("rho", dgp.rho);
    dgp.sigma2 = reader.get<double>("sigma2", dgp.sigma2);
    dgp.alpha = reader.get<double>("alpha", dgp.alpha);
    dgp.y_noise_sd = reader.get<double>("y_noise_sd", dgp.y_noise_sd);
    require(dgp.rho > -1.0 && dgp.rho < 1.0, "dgp.rho must lie in (-1, 1)");
    require(dgp.sigma2 > 0.0, "dgp.sigma2 must be positive");
    require(dgp.alpha > 0.0 && dgp.alpha < 1.0, "dgp.alpha must lie in (0, 1)");
    require(dgp.y_noise_sd >= 0.0, "dgp.y_noise_sd must be nonnegative");
    reader.finish();
    echo = {{"rho", dgp.rho}, {"sigma2", dgp.sigma2}, {"alpha", dgp.alpha}, {"y_noise_sd", dgp.y_noise_sd}};
    return dgp;
}

QuadraticDgp parse_quadratic(ConfigReader reader, Json& echo)
{
    QuadraticDgp dgp;
    dgp.rho = reader.get<double>("rho", dgp.rho);
    dgp.sigma2 = reader.get<double>("sigma2", dgp.sigma2);
    dgp.y_noise_sd = reader.get<double>("y_noise_sd", dgp.y_noise_sd);
    require(dgp.rho > -1.0 && dgp.rho < 1.0, "dgp.rho must lie in (-1, 1)");
    require(dgp.sigma2 > 0.0, "dgp.sigma2 must be positive");
    require(dgp.y_noise_sd >= 0.0, "dgp.y_noise_sd must be nonnegative");
    dgp.theta_true = 1.0 + dgp.sigma2;  // E[-X + W^2] with X ~ N(0, 1)
    reader.finish();
    echo = {{"rho", dgp.rho}, {"sigma2", dgp.sigma2}, {"y_noise_sd", dgp.y_noise_sd}};
    return dgp;
}

SequentialDgp parse_sequential(ConfigReader reader, Json& echo)
{
    SequentialDgp dgp;
    if (reader.has("a1"))
        dgp.a1 = parse_matrix2(reader.raw("a1"), "dgp.a1");
    if (reader.has("a2"))
        dgp.a2 = parse_matrix2(reader.raw("a2"), "dgp.a2");
    dgp.eps_cov_scale = reader.get<double>("eps_cov_scale", dgp.eps_cov_scale);
    dgp.alpha = reader.get<double>("alpha", dgp.alpha);
    require(dgp.eps_cov_scale > 0.0, "dgp.eps_cov_scale must be positive");
    require(dgp.alpha > 0.0 && dgp.alpha < 1.0, "dgp.alpha must lie in (0, 1)");
    require(dgp.spectral_radius() < 1.0, "dgp: unstable AR(2) coefficients (spectral radius >= 1)");
    reader.finish();
    echo = {{"a1", matrix_json(dgp.a1)},
            {"a2", matrix_json(dgp.a2)},
            {"eps_cov_scale", dgp.eps_cov_scale},
            {"alpha", dgp.alpha}};
    return dgp;
}

std::size_t positive_size(ConfigReader& reader, const std::string& key, long long fallback, long long minimum)
{
    const auto value = reader.get<long long>(key, fallback);
    require(value >= minimum, key + " must be at least " + std::to_string(minimum));
    return static_cast<std::size_t>(value);
}

int cmd_simulate(const CommonFlags& flags, std::ostream& out, std::ostream& err)
{
    const Json root = load_config(flags);
    ConfigReader config(root, "config");
    const std::uint64_t seed = resolve_seed(flags, config);
    const std::string kind = config.get<std::string>("dgp", "homogeneous");
    const std::size_t n = positive_size(config, "n", 1000, 2);
    const auto replication = config.get<std::uint64_t>("replication", 0);
    Json echo = {{"dgp", kind}, {"n", n}, {"replication", replication}};
    Json overrides;

    SimulatedData data;
    if (kind == "homogeneous") {
        data = gen_homogeneous(parse_homogeneous(config.child("overrides"), overrides), n, seed, replication);
    } else if (kind == "quadratic") {
        const std::size_t n_g = positive_size(config, "n_g", 10, 1);
        echo["n_g"] = n_g;
        data = gen_quadratic(parse_quadratic(config.child("overrides"), overrides), n, n_g, seed, replication);
    } else if (kind == "sequential") {
        data = gen_sequential(parse_sequential(config.child("overrides"), overrides), n, seed, replication);
    } else {
        throw ValidationError("dgp must be 'homogeneous', 'quadratic' or 'sequential'");
    }
    echo["overrides"] = overrides;
    config.finish();

    std::ostringstream csv;
    write_dataset_csv(csv, data.dataset);
    Json j = envelope("simulate", echo, seed);
    j["truth"] = data.truth;
    j["full_outcome_mean"] = compensated_mean(data.full_outcomes);
    j["n"] = data.dataset.num_individuals();
    j["G"] = data.dataset.num_clusters();

    if (!flags.out_dir.empty()) {
        const auto dir = ensure_out_dir(flags.out_dir);
        write_text_file(dir / "dataset.csv", csv.str());
        write_text_file(dir / "report.json", j.dump(2) + "\n");
    } else if (flags.format == "csv") {
        out << csv.str();
    } else {
        j["dataset_csv"] = csv.str();
        out << j.dump(2) << '\n';
    }
    err << "simulate " << kind << ": n=" << data.dataset.num_individuals() << " G=" << data.dataset.num_clusters()
        << " truth=" << format_double(data.truth) << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------------------
// Monte Carlo commands

void print_arm_summaries(const MonteCarloReport& report, std::ostream& err)
{
    for (const auto& arm : report.arms)
        err << arm.label << ' ' << to_string(arm.metric) << '=' << format_double(arm.value)
            << " mc_se=" << format_double(arm.mc_se) << " failures=" << arm.failures << '\n';
}

int finish_mc(const CommonFlags& flags, const std::string& command, const Json& echo, std::uint64_t seed,
              const MonteCarloReport& report, std::size_t expected_arms, std::ostream& out, std::ostream& err)
{
    check_report(report, expected_arms);
    Json j = envelope(command, echo, seed);
    j["report"] = to_json(report);
    std::ostringstream curves;
    write_curves_csv(curves, report);
    emit(flags, j, curves.str(), out);
    print_arm_summaries(report, err);
    return kSuccess;
}

int cmd_mc_coverage(const CommonFlags& flags, std::ostream& out, std::ostream& err)
{
    const Json root = load_config(flags);
    ConfigReader config(root, "config");
    CoverageOptions options;
    options.seed = resolve_seed(flags, config);
    options.threads = resolve_threads(flags.threads);
    options.n = positive_size(config, "n", 10000, 2);
    options.alphas = config.get<std::vector<double>>("alphas", options.alphas);
    require(!options.alphas.empty(), "alphas must be nonempty");
    for (const double a : options.alphas)
        require(a > 0.0 && a < 1.0, "alphas must lie in (0, 1)");
    options.replications = positive_size(config, "replications", 300, 50);
    options.level = config.get<double>("level", 0.95);
    require(options.level > 0.0 && options.level < 1.0, "level must lie in (0, 1)");
    options.folds = config.get<int>("folds", 2);
    require(options.folds >= 2, "folds must be at least 2");
    options.clip_epsilon = config.get<double>("clip_epsilon", kDefaultClipEpsilon);
    require(options.clip_epsilon > 0.0 && options.clip_epsilon < 0.5, "clip_epsilon must lie in (0, 0.5)");
    Json dgp_echo;
    const HomogeneousDgp dgp = parse_homogeneous(config.child("dgp"), dgp_echo);
    config.finish();

    const Json echo = {{"n", options.n},         {"alphas", options.alphas}, {"replications", options.replications},
                       {"level", options.level}, {"folds", options.folds},   {"clip_epsilon", options.clip_epsilon},
                       {"dgp", dgp_echo}};
    const auto report = run_coverage_experiment(dgp, options);
    return finish_mc(flags, "mc-coverage", echo, options.seed, report, 2 * options.alphas.size(), out, err);
}

int cmd_mc_rmse(const CommonFlags& flags, std::ostream& out, std::ostream& err)
{
    const Json root = load_config(flags);
    ConfigReader config(root, "config");
    RmseOptions options;
    options.seed = resolve_seed(flags, config);
    options.threads = resolve_threads(flags.threads);
    options.n_grid = config.get<std::vector<std::size_t>>("n_grid", options.n_grid);
    require(!options.n_grid.empty(), "n_grid must be nonempty");
    for (const auto n : options.n_grid)
        require(n >= 2, "n_grid entries must be at least 2");
    options.replications = positive_size(config, "replications", 200, 50);
    options.folds = config.get<int>("folds", 2);
    require(options.folds >= 2, "folds must be at least 2");
    options.clip_epsilon = config.get<double>("clip_epsilon", kDefaultClipEpsilon);
    require(options.clip_epsilon > 0.0 && options.clip_epsilon < 0.5, "clip_epsilon must lie in (0, 0.5)");
    Json dgp_echo;
    const SequentialDgp dgp = parse_sequential(config.child("dgp"), dgp_echo);
    config.finish();

    const Json echo = {{"n_grid", options.n_grid}, {"replications", options.replications},
                       {"folds", options.folds},   {"clip_epsilon", options.clip_epsilon},
                       {"dgp", dgp_echo}};
    const auto report = run_rmse_experiment(dgp, options);
    return finish_mc(flags, "mc-rmse", echo, options.seed, report, 3 * options.n_grid.size(), out, err);
}

int cmd_mc_misspec(const CommonFlags& flags, std::ostream& out, std::ostream& err)
{
    const Json root = load_config(flags);
    ConfigReader config(root, "config");
    MisspecOptions options;
    options.seed = resolve_seed(flags, config);
    options.threads = resolve_threads(flags.threads);
    options.n = positive_size(config, "n", 10000, 2);
    options.n_g = positive_size(config, "n_g", 100, 1);
    require(options.n_g <= options.n / 2, "n_g must leave at least 2 clusters");
    options.replications = positive_size(config, "replications", 200, 50);
    options.folds = config.get<int>("folds", 2);
    require(options.folds >= 2, "folds must be at least 2");
    options.clip_epsilon = config.get<double>("clip_epsilon", kDefaultClipEpsilon);
    require(options.clip_epsilon > 0.0 && options.clip_epsilon < 0.5, "clip_epsilon must lie in (0, 0.5)");
    Json dgp_echo;
    const QuadraticDgp dgp = parse_quadratic(config.child("dgp"), dgp_echo);
    config.finish();

    const Json echo = {{"n", options.n},         {"n_g", options.n_g},
                       {"replications", options.replications},
                       {"folds", options.folds}, {"clip_epsilon", options.clip_epsilon},
                       {"dgp", dgp_echo}};
    const auto report = run_misspec_experiment(dgp, options);
    return finish_mc(flags, "mc-misspec", echo, options.seed, report, 12, out, err);
}

int cmd_omega_diag(const CommonFlags& flags, std::ostream& out, std::ostream& err)
{
    const Json root = load_config(flags);
    ConfigReader config(root, "config");
    OmegaDiagnosticOptions options;
    options.seed = resolve_seed(flags, config);
    options.threads = resolve_threads(flags.threads);
    options.kind = parse_dependence_kind(config.get<std::string>("kind", "iid_within"));
    options.alpha = config.get<double>("alpha", 0.5);
    require(options.alpha > 0.0 && options.alpha < 1.0, "alpha must lie in (0, 1)");
    options.n_grid = config.get<std::vector<std::size_t>>("n_grid", options.n_grid);
    options.reps = positive_size(config, "reps", 200, 2);
    config.finish();

    const Json echo = {{"kind", to_string(options.kind)},
                       {"alpha", options.alpha},
                       {"n_grid", options.n_grid},
                       {"reps", options.reps}};
    const auto report = omega_scaling_diagnostic(options);
    for (const auto& p : report.points)
        check_finite(p.omega, "omega");
    Json j = envelope("omega-diag", echo, options.seed);
    j["report"] = to_json(report);
    std::ostringstream curves;
    write_curves_csv(curves, report);
    emit(flags, j, curves.str(), out);
    err << to_string(report.kind) << " slope=" << format_double(report.slope)
        << " slope_se=" << format_double(report.slope_se)
        << " corr(omega, log n)=" << format_double(report.log_n_correlation) << '\n';
    return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Doubly robust estimation for clustered data with missing outcomes", "clusterdr"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonFlags flags;
    auto add_common = [&flags](CLI::App* sub, bool needs_data) {
        sub->add_option("--config", flags.config_path, "JSON configuration file");
        auto* data = sub->add_option("--data", flags.data_path, "dataset CSV");
        if (needs_data)
            data->required();
        sub->add_option("--out", flags.out_dir, "output directory for report files");
        sub->add_option("--seed", flags.seed, "base seed (overrides the config)");
        sub->add_option("--threads", flags.threads,
                        std::string("worker threads (default: $") + kThreadsEnvVar + " or all cores)");
        sub->add_option("--format", flags.format, "stdout format")->check(CLI::IsMember({"json", "csv"}));
    };

    auto* estimate = app.add_subcommand("estimate", "estimate the average outcome of a dataset");
    add_common(estimate, true);
    auto* bootstrap = app.add_subcommand("bootstrap", "cluster bootstrap variance for a dataset");
    add_common(bootstrap, true);
    auto* simulate = app.add_subcommand("simulate", "write a simulated dataset");
    add_common(simulate, false);
    auto* coverage = app.add_subcommand("mc-coverage", "CI coverage of iid vs cluster-robust variances");
    add_common(coverage, false);
    auto* rmse = app.add_subcommand("mc-rmse", "RMSE of history-summary vs current-only adjustment");
    add_common(rmse, false);
    auto* misspec = app.add_subcommand("mc-misspec", "MSE of plug-in, IPW and DR under misspecification");
    add_common(misspec, false);
    auto* omega = app.add_subcommand("omega-diag", "Omega_n growth under synthetic dependence");
    add_common(omega, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInputError;
    }

    try {
        if (*estimate) return cmd_estimate(flags, false, out, err);
        if (*bootstrap) return cmd_estimate(flags, true, out, err);
        if (*simulate) return cmd_simulate(flags, out, err);
        if (*coverage) return cmd_mc_coverage(flags, out, err);
        if (*rmse) return cmd_mc_rmse(flags, out, err);
        if (*misspec) return cmd_mc_misspec(flags, out, err);
        if (*omega) return cmd_omega_diag(flags, out, err);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const EstimationError& e) {
        err << "estimation failed: " << e.what() << '\n';
        return kEstimationFailure;
    } catch (const InvariantError& e) {
        err << "internal invariant breached: " << e.what() << '\n';
        return kInternalError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kInternalError;
    }
    return kInternalError;
}

}  // namespace clusterdr::cli
