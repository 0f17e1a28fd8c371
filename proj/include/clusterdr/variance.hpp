#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "clusterdr/core_data.hpp"
#include "clusterdr/estimators.hpp"
#include "clusterdr/nuisance.hpp"

namespace clusterdr {

struct VarianceReport {
    VarianceMethod method = VarianceMethod::iid;
    double estimate_variance = 0.0;  // variance of the point estimate
    std::optional<double> omega_hat;  // cluster-robust only
    std::optional<std::size_t> bootstrap_reps;
    bool degenerate_flag = false;  // omega_hat <= 0, or a negative variance
    // Bootstrap only.
    std::optional<Interval> percentile_ci;
    std::size_t redraws = 0;
};

/// sigma^2/n, sigma^2 the (n-1)-denominator sample variance of the panel.
[[nodiscard]] VarianceReport var_iid(const InfluencePanel& panel, double theta_hat);

struct ClusterRobustOptions {
    // Multiply omega_hat by G / (G - 1). Off by default; the asymptotic
    // theory has no such factor.
    bool small_sample_correction = false;
};

/// omega_hat = (1/n) sum_g (sum_i phi_gi)^2 - (1/n) sum_g n_g^2 theta^2,
/// evaluated in the centred form (1/n)[sum_g (S_g - n_g theta)^2
/// + 2 theta sum_g n_g (S_g - n_g theta)], which is algebraically identical
/// and avoids cancellation. estimate_variance = omega_hat / n.
[[nodiscard]] VarianceReport var_cluster_robust(const InfluencePanel& panel, double theta_hat,
                                                const ClusterRobustOptions& options = {});
[[nodiscard]] VarianceReport var_cluster_robust(const ClusteredDataset& dataset, const InfluencePanel& panel,
                                                double theta_hat, const ClusterRobustOptions& options = {});

/// theta +- z_{(1+level)/2} sqrt(variance). nullopt when the variance is
/// negative or not finite.
[[nodiscard]] std::optional<Interval> wald_ci(double theta_hat, double estimate_variance, double level);

enum class BootstrapMode { fixed_nuisances, refit_nuisances };
[[nodiscard]] std::string_view to_string(BootstrapMode mode) noexcept;
[[nodiscard]] BootstrapMode parse_bootstrap_mode(std::string_view name);

// What to recompute on each resample.
struct EstimatorSpec {
    EstimatorKind estimator = EstimatorKind::dr;
    CrossFitOptions cross_fit;
    std::optional<SummaryConfig> summary;  // dr_sequential only
    std::optional<KnownNuisance> known;    // bypasses fitting
};

struct BootstrapOptions {
    std::size_t replicates = 500;
    BootstrapMode mode = BootstrapMode::fixed_nuisances;
    double ci_level = 0.95;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Point estimate for `spec` on `dataset` plus the per-individual
/// contributions (whose mean it is).
struct SpecEstimate {
    double theta_hat = 0.0;
    InfluencePanel contributions;
};
[[nodiscard]] SpecEstimate evaluate_spec(const ClusteredDataset& dataset, const EstimatorSpec& spec);

struct BootstrapResult {
    VarianceReport report;
    std::vector<double> replicates;  // in replicate order
    BootstrapMode mode = BootstrapMode::fixed_nuisances;
};

/// Cluster bootstrap: resamples G clusters with replacement B times.
/// fixed_nuisances reuses each source cluster's original contributions;
/// refit_nuisances re-runs the whole estimator. Replicate b draws from the
/// stream (seed, b, bootstrap), so results do not depend on `threads`.
[[nodiscard]] BootstrapResult cluster_bootstrap(const ClusteredDataset& dataset, const EstimatorSpec& spec,
                                                const BootstrapOptions& options);

/// Fixed-contribution bootstrap on a precomputed panel.
[[nodiscard]] BootstrapResult cluster_bootstrap(const InfluencePanel& contributions, const BootstrapOptions& options);

/// Resampled cluster indices for replicate b (attempt a), exposed for tests.
[[nodiscard]] std::vector<std::size_t> bootstrap_indices(std::size_t num_clusters, std::uint64_t seed,
                                                         std::size_t replicate, std::size_t attempt = 0);

}  // namespace clusterdr
