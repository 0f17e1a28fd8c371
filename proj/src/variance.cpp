#include "clusterdr/variance.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "clusterdr/errors.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/parallel.hpp"
#include "clusterdr/rng.hpp"

namespace clusterdr {

VarianceReport var_iid(const InfluencePanel& panel, double theta_hat)
{
    const std::size_t n = panel.size();
    if (n < 2)
        throw ValidationError("var_iid: need at least 2 individuals");
    KahanSum acc;
    for (const double v : panel.values()) {
        const double d = v - theta_hat;
        acc.add(d * d);
    }
    const double sigma2 = acc.value() / static_cast<double>(n - 1);
    VarianceReport report;
    report.method = VarianceMethod::iid;
    report.estimate_variance = sigma2 / static_cast<double>(n);
    return report;
}

VarianceReport var_cluster_robust(const InfluencePanel& panel, double theta_hat, const ClusterRobustOptions& options)
{
    const std::size_t n = panel.size();
    const std::size_t G = panel.num_clusters();
    if (n == 0)
        throw ValidationError("var_cluster_robust: empty panel");

    KahanSum squares;
    KahanSum cross;
    for (std::size_t g = 0; g < G; ++g) {
        const double size = static_cast<double>(panel.cluster_size(g));
        const double centred = panel.cluster_sum(g) - size * theta_hat;
        squares.add(centred * centred);
        cross.add(size * centred);
    }
    double omega = (squares.value() + 2.0 * theta_hat * cross.value()) / static_cast<double>(n);
    if (options.small_sample_correction && G > 1)
        omega *= static_cast<double>(G) / static_cast<double>(G - 1);

    VarianceReport report;
    report.method = VarianceMethod::cluster_robust;
    report.omega_hat = omega;
    report.estimate_variance = omega / static_cast<double>(n);
    report.degenerate_flag = !(omega > 0.0);
    return report;
}

VarianceReport var_cluster_robust(const ClusteredDataset& dataset, const InfluencePanel& panel, double theta_hat,
                                  const ClusterRobustOptions& options)
{
    if (!panel.aligned_with(dataset))
        throw ValidationError("var_cluster_robust: panel is not aligned with the dataset");
    return var_cluster_robust(panel, theta_hat, options);
}

std::optional<Interval> wald_ci(double theta_hat, double estimate_variance, double level)
{
    if (!(level > 0.0 && level < 1.0))
        throw ValidationError("wald_ci: level must lie in (0, 1)");
    if (!(estimate_variance >= 0.0) || !std::isfinite(estimate_variance))
        return std::nullopt;
    const double half_width = normal_quantile(0.5 * (1.0 + level)) * std::sqrt(estimate_variance);
    return Interval{theta_hat - half_width, theta_hat + half_width};
}

std::string_view to_string(BootstrapMode mode) noexcept
{
    return mode == BootstrapMode::fixed_nuisances ? "fixed_nuisances" : "refit_nuisances";
}

BootstrapMode parse_bootstrap_mode(std::string_view name)
{
    if (name == "fixed_nuisances")
        return BootstrapMode::fixed_nuisances;
    if (name == "refit_nuisances")
        return BootstrapMode::refit_nuisances;
    throw ValidationError("unknown bootstrap mode '" + std::string(name) + "'");
}

SpecEstimate evaluate_spec(const ClusteredDataset& dataset, const EstimatorSpec& spec)
{
    const bool sequential = spec.estimator == EstimatorKind::dr_sequential;
    if (sequential && !spec.summary)
        throw ValidationError("dr_sequential requires a summary configuration");

    validate(dataset);
    const ClusteredDataset summarized = sequential ? summarized_dataset(dataset, *spec.summary) : ClusteredDataset{};
    const ClusteredDataset& working = sequential ? summarized : dataset;

    NuisancePredictions predictions = spec.known
                                          ? predict_known(working, *spec.known, spec.cross_fit.clip_epsilon)
                                          : cross_fit(working, spec.cross_fit).predictions;
    InfluencePanel contributions = estimator_contributions(spec.estimator, working, predictions);
    const double theta = compensated_mean(contributions.values());
    return SpecEstimate{theta, std::move(contributions)};
}

std::vector<std::size_t> bootstrap_indices(std::size_t num_clusters, std::uint64_t seed, std::size_t replicate,
                                           std::size_t attempt)
{
    const std::uint64_t stream_seed = attempt == 0 ? seed : derive_seed(seed, attempt);
    RandomStream stream(stream_seed, replicate, StreamRole::bootstrap);
    std::vector<std::size_t> picks(num_clusters);
    for (auto& p : picks)
        p = static_cast<std::size_t>(stream.below(num_clusters));
    return picks;
}

namespace {

void check_bootstrap_options(std::size_t num_clusters, const BootstrapOptions& options)
{
    if (options.replicates < 100)
        throw ValidationError("cluster_bootstrap: need at least 100 replicates");
    if (num_clusters < 2)
        throw ValidationError("cluster_bootstrap: need at least 2 clusters");
    if (!(options.ci_level > 0.0 && options.ci_level < 1.0))
        throw ValidationError("cluster_bootstrap: ci_level must lie in (0, 1)");
}

BootstrapResult summarize_replicates(std::vector<double> replicates, const BootstrapOptions& options,
                                     std::size_t redraws)
{
    const double mean = compensated_mean(replicates);
    KahanSum acc;
    for (const double v : replicates)
        acc.add((v - mean) * (v - mean));

    BootstrapResult result;
    result.mode = options.mode;
    result.report.method = VarianceMethod::cluster_bootstrap;
    result.report.estimate_variance = acc.value() / static_cast<double>(replicates.size() - 1);
    result.report.bootstrap_reps = replicates.size();
    result.report.redraws = redraws;

    std::vector<double> sorted = replicates;
    std::sort(sorted.begin(), sorted.end());
    const double tail = 0.5 * (1.0 - options.ci_level);
    result.report.percentile_ci = Interval{sorted_quantile(sorted, tail), sorted_quantile(sorted, 1.0 - tail)};
    result.replicates = std::move(replicates);
    return result;
}

double resampled_mean(const std::vector<double>& cluster_sums, const std::vector<std::size_t>& cluster_sizes,
                      const std::vector<std::size_t>& picks)
{
    KahanSum total;
    std::size_t count = 0;
    for (const std::size_t g : picks) {
        total.add(cluster_sums[g]);
        count += cluster_sizes[g];
    }
    return total.value() / static_cast<double>(count);
}

}  // namespace

BootstrapResult cluster_bootstrap(const InfluencePanel& contributions, const BootstrapOptions& options)
{
    const std::size_t G = contributions.num_clusters();
    check_bootstrap_options(G, options);

    std::vector<double> sums(G);
    std::vector<std::size_t> sizes(G);
    for (std::size_t g = 0; g < G; ++g) {
        sums[g] = contributions.cluster_sum(g);
        sizes[g] = contributions.cluster_size(g);
    }
    std::vector<double> replicates(options.replicates);
    parallel_for(options.replicates, options.threads, [&](std::size_t b) {
        replicates[b] = resampled_mean(sums, sizes, bootstrap_indices(G, options.seed, b));
    });
    BootstrapOptions fixed = options;
    fixed.mode = BootstrapMode::fixed_nuisances;
    return summarize_replicates(std::move(replicates), fixed, 0);
}

BootstrapResult cluster_bootstrap(const ClusteredDataset& dataset, const EstimatorSpec& spec,
                                  const BootstrapOptions& options)
{
    check_bootstrap_options(dataset.num_clusters(), options);
    if (options.mode == BootstrapMode::fixed_nuisances)
        return cluster_bootstrap(evaluate_spec(dataset, spec).contributions, options);

    const std::size_t G = dataset.num_clusters();
    const std::size_t max_redraws = 10 * options.replicates;
    std::vector<double> replicates(options.replicates);
    std::vector<std::size_t> redraws_per_replicate(options.replicates, 0);
    std::atomic<std::size_t> total_redraws{0};

    parallel_for(options.replicates, options.threads, [&](std::size_t b) {
        for (std::size_t attempt = 0;; ++attempt) {
            if (total_redraws.load() > max_redraws)
                throw EstimationError("cluster_bootstrap: more than " + std::to_string(max_redraws) +
                                      " resamples could not be estimated");
            const auto picks = bootstrap_indices(G, options.seed, b, attempt);
            std::vector<Cluster> clusters;
            clusters.reserve(G);
            for (const std::size_t g : picks)
                clusters.push_back(dataset.cluster(g));
            EstimatorSpec resample_spec = spec;
            resample_spec.cross_fit.seed = derive_seed(spec.cross_fit.seed, b, attempt);
            try {
                replicates[b] = evaluate_spec(ClusteredDataset(std::move(clusters)), resample_spec).theta_hat;
                redraws_per_replicate[b] = attempt;
                return;
            } catch (const EstimationError&) {
                total_redraws.fetch_add(1);
            }
        }
    });
    std::size_t redraws = 0;
    for (const std::size_t r : redraws_per_replicate)
        redraws += r;
    return summarize_replicates(std::move(replicates), options, redraws);
}

}  // namespace clusterdr
