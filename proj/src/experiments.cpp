#include <array>
#include <optional>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "clusterdr/errors.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/parallel.hpp"
#include "clusterdr/rng.hpp"
#include "clusterdr/simulation.hpp"
#include "clusterdr/variance.hpp"

namespace clusterdr {

std::string_view to_string(Metric metric) noexcept
{
    switch (metric) {
    case Metric::coverage: return "coverage";
    case Metric::rmse: return "rmse";
    case Metric::mse: return "mse";
    }
    return "?";
}

namespace {

std::string format_value(double v)
{
    std::ostringstream os;
    os << v;
    return os.str();
}

void check_replications(std::size_t m)
{
    if (m < 1)
        throw ValidationError("replications must be at least 1");
}

// Squared errors of the replications that succeeded, in replication order.
struct ErrorAccumulator {
    std::vector<double> squared_errors;
    std::size_t failures = 0;

    [[nodiscard]] double mse() const { return compensated_mean(squared_errors); }
    [[nodiscard]] double mse_se() const
    {
        const std::size_t m = squared_errors.size();
        if (m < 2)
            return 0.0;
        const double mean = mse();
        KahanSum acc;
        for (const double e : squared_errors)
            acc.add((e - mean) * (e - mean));
        return std::sqrt(acc.value() / static_cast<double>(m - 1) / static_cast<double>(m));
    }
};

ArmResult error_arm(std::string label, std::string estimator, std::string specification, std::string x_name,
                    double x_value, Metric metric, const ErrorAccumulator& errors)
{
    ArmResult arm{std::move(label), std::move(estimator), std::move(specification), std::move(x_name), x_value, metric};
    arm.successes = errors.squared_errors.size();
    arm.failures = errors.failures;
    if (arm.successes == 0)
        return arm;
    const double mse = errors.mse();
    if (metric == Metric::rmse) {
        arm.value = std::sqrt(mse);
        arm.mc_se = arm.value > 0.0 ? errors.mse_se() / (2.0 * arm.value) : 0.0;
    } else {
        arm.value = mse;
        arm.mc_se = errors.mse_se();
    }
    return arm;
}

}  // namespace

std::string misspec_label(bool mu_correct, bool pi_correct)
{
    return std::string(mu_correct ? "mu_correct" : "mu_wrong") + "/" + (pi_correct ? "pi_correct" : "pi_wrong");
}

const ArmResult& find_arm(const MonteCarloReport& report, std::string_view label)
{
    for (const auto& arm : report.arms)
        if (arm.label == label)
            return arm;
    throw ValidationError("no arm labelled '" + std::string(label) + "'");
}

MonteCarloReport run_coverage_experiment(const HomogeneousDgp& spec, const CoverageOptions& options)
{
    check_replications(options.replications);
    if (options.alphas.empty())
        throw ValidationError("coverage experiment needs at least one alpha");
    if (!(options.level > 0.0 && options.level < 1.0))
        throw ValidationError("level must lie in (0, 1)");

    struct Outcome {
        bool ok = false;
        bool iid_covered = false;
        bool robust_ok = false;
        bool robust_covered = false;
    };
    const std::size_t M = options.replications;
    const std::size_t tasks = options.alphas.size() * M;
    std::vector<Outcome> outcomes(tasks);

    parallel_for(tasks, options.threads, [&](std::size_t task) {
        const std::size_t a = task / M;
        const std::size_t m = task % M;
        HomogeneousDgp dgp = spec;
        dgp.alpha = options.alphas[a];
        const std::uint64_t arm_seed = derive_seed(options.seed, a);
        try {
            const SimulatedData data = gen_homogeneous(dgp, options.n, arm_seed, m);
            CrossFitOptions cf;
            cf.folds = options.folds;
            cf.clip_epsilon = options.clip_epsilon;
            cf.seed = derive_seed(arm_seed, m);
            const auto fitted = cross_fit(data.dataset, cf);
            const InfluencePanel panel = influence_values(data.dataset, fitted.predictions);
            const double theta = compensated_mean(panel.values());

            Outcome out;
            out.ok = true;
            const auto iid = wald_ci(theta, var_iid(panel, theta).estimate_variance, options.level);
            out.iid_covered = iid && iid->lower <= data.truth && data.truth <= iid->upper;
            const VarianceReport robust = var_cluster_robust(data.dataset, panel, theta);
            if (!robust.degenerate_flag) {
                const auto ci = wald_ci(theta, robust.estimate_variance, options.level);
                out.robust_ok = ci.has_value();
                out.robust_covered = ci && ci->lower <= data.truth && data.truth <= ci->upper;
            }
            outcomes[task] = out;
        } catch (const EstimationError&) {
            outcomes[task] = Outcome{};
        }
    });

    MonteCarloReport report;
    report.experiment = "coverage";
    report.replications = M;
    report.seed = options.seed;
    report.truth = spec.theta_true;
    for (std::size_t a = 0; a < options.alphas.size(); ++a) {
        std::size_t ok_iid = 0, hit_iid = 0, ok_robust = 0, hit_robust = 0, failed = 0;
        for (std::size_t m = 0; m < M; ++m) {
            const Outcome& o = outcomes[a * M + m];
            if (!o.ok) {
                ++failed;
                continue;
            }
            ++ok_iid;
            hit_iid += o.iid_covered ? 1 : 0;
            ok_robust += o.robust_ok ? 1 : 0;
            hit_robust += o.robust_covered ? 1 : 0;
        }
        const double alpha = options.alphas[a];
        auto coverage_arm = [&](const char* method, std::size_t ok, std::size_t hits) {
            ArmResult arm{"alpha=" + format_value(alpha) + "/" + method, "dr", method, "alpha", alpha,
                          Metric::coverage};
            arm.successes = ok;
            arm.failures = M - ok;
            if (ok > 0) {
                const double p = static_cast<double>(hits) / static_cast<double>(ok);
                arm.value = p;
                arm.mc_se = std::sqrt(p * (1.0 - p) / static_cast<double>(ok));
            }
            return arm;
        };
        (void)failed;
        report.arms.push_back(coverage_arm("iid", ok_iid, hit_iid));
        report.arms.push_back(coverage_arm("cluster_robust", ok_robust, hit_robust));
    }
    return report;
}

MonteCarloReport run_rmse_experiment(const SequentialDgp& spec, const RmseOptions& options)
{
    check_replications(options.replications);
    if (options.n_grid.empty())
        throw ValidationError("rmse experiment needs at least one n");

    struct Outcome {
        std::optional<double> history, current, unadjusted;
    };
    const std::size_t M = options.replications;
    const std::size_t tasks = options.n_grid.size() * M;
    std::vector<Outcome> outcomes(tasks);
    const SummaryConfig history = SummaryConfig::max_min_mean();
    const SummaryConfig current = SummaryConfig::current_only();

    parallel_for(tasks, options.threads, [&](std::size_t task) {
        const std::size_t k = task / M;
        const std::size_t m = task % M;
        const std::uint64_t grid_seed = derive_seed(options.seed, k);
        const SimulatedData data = gen_sequential(spec, options.n_grid[k], grid_seed, m);
        CrossFitOptions cf;
        cf.folds = options.folds;
        cf.clip_epsilon = options.clip_epsilon;
        cf.seed = derive_seed(grid_seed, m);
        Outcome out;
        try {
            out.history = estimate_dr_sequential(data.dataset, history, cf).report.theta_hat;
        } catch (const EstimationError&) {
        }
        try {
            out.current = estimate_dr_sequential(data.dataset, current, cf).report.theta_hat;
        } catch (const EstimationError&) {
        }
        try {
            out.unadjusted = observed_mean(data.dataset);
        } catch (const EstimationError&) {
        }
        outcomes[task] = out;
    });

    MonteCarloReport report;
    report.experiment = "rmse";
    report.replications = M;
    report.seed = options.seed;
    report.truth = spec.psi_true;
    for (std::size_t k = 0; k < options.n_grid.size(); ++k) {
        ErrorAccumulator hist, cur, unadj;
        auto push = [&](ErrorAccumulator& acc, const std::optional<double>& est) {
            if (est)
                acc.squared_errors.push_back((*est - spec.psi_true) * (*est - spec.psi_true));
            else
                ++acc.failures;
        };
        for (std::size_t m = 0; m < M; ++m) {
            const Outcome& o = outcomes[k * M + m];
            push(hist, o.history);
            push(cur, o.current);
            push(unadj, o.unadjusted);
        }
        const double n = static_cast<double>(options.n_grid[k]);
        const std::string prefix = "n=" + std::to_string(options.n_grid[k]) + "/";
        report.arms.push_back(error_arm(prefix + "history_summary", "dr_sequential", "max_min_mean", "n", n,
                                        Metric::rmse, hist));
        report.arms.push_back(
            error_arm(prefix + "current_only", "dr_sequential", "current_w", "n", n, Metric::rmse, cur));
        report.arms.push_back(
            error_arm(prefix + "unadjusted", "observed_mean", "none", "n", n, Metric::rmse, unadj));
    }
    return report;
}

MonteCarloReport run_misspec_experiment(const QuadraticDgp& spec, const MisspecOptions& options)
{
    check_replications(options.replications);
    constexpr std::array<std::pair<bool, bool>, 4> kSpecs{
        {{true, true}, {true, false}, {false, true}, {false, false}}};
    constexpr std::array<EstimatorKind, 3> kEstimators{EstimatorKind::plugin, EstimatorKind::ipw, EstimatorKind::dr};

    // outcomes[m][spec][estimator]
    using Row = std::array<std::array<std::optional<double>, 3>, 4>;
    const std::size_t M = options.replications;
    std::vector<Row> outcomes(M);

    parallel_for(M, options.threads, [&](std::size_t m) {
        const SimulatedData data = gen_quadratic(spec, options.n, options.n_g, options.seed, m);
        Row row;
        for (std::size_t s = 0; s < kSpecs.size(); ++s) {
            CrossFitOptions cf;
            cf.folds = options.folds;
            cf.clip_epsilon = options.clip_epsilon;
            cf.seed = derive_seed(options.seed, m);
            cf.maps.outcome = kSpecs[s].first ? FeatureMap::quadratic_w() : FeatureMap::linear();
            cf.maps.propensity = kSpecs[s].second ? FeatureMap::quadratic_w() : FeatureMap::linear();
            try {
                const auto fitted = cross_fit(data.dataset, cf);
                for (std::size_t e = 0; e < kEstimators.size(); ++e) {
                    const InfluencePanel contributions =
                        estimator_contributions(kEstimators[e], data.dataset, fitted.predictions);
                    row[s][e] = compensated_mean(contributions.values());
                }
            } catch (const EstimationError&) {
            }
        }
        outcomes[m] = row;
    });

    MonteCarloReport report;
    report.experiment = "misspec";
    report.replications = M;
    report.seed = options.seed;
    report.truth = spec.theta_true;
    for (std::size_t s = 0; s < kSpecs.size(); ++s) {
        const std::string spec_label = misspec_label(kSpecs[s].first, kSpecs[s].second);
        for (std::size_t e = 0; e < kEstimators.size(); ++e) {
            ErrorAccumulator acc;
            for (std::size_t m = 0; m < M; ++m) {
                const auto& est = outcomes[m][s][e];
                if (est)
                    acc.squared_errors.push_back((*est - spec.theta_true) * (*est - spec.theta_true));
                else
                    ++acc.failures;
            }
            const std::string name(to_string(kEstimators[e]));
            report.arms.push_back(error_arm(spec_label + "/" + name, name, spec_label, "n",
                                            static_cast<double>(options.n), Metric::mse, acc));
        }
    }
    return report;
}

}  // namespace clusterdr
