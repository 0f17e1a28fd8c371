#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clusterdr/core_data.hpp"
#include "clusterdr/nuisance.hpp"

namespace clusterdr {

enum class EstimatorKind { plugin, ipw, dr, dr_sequential };
enum class VarianceMethod { none, iid, cluster_robust, cluster_bootstrap };

[[nodiscard]] std::string_view to_string(EstimatorKind kind) noexcept;
[[nodiscard]] std::string_view to_string(VarianceMethod method) noexcept;
[[nodiscard]] EstimatorKind parse_estimator_kind(std::string_view name);
[[nodiscard]] VarianceMethod parse_variance_method(std::string_view name);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    friend bool operator==(const Interval&, const Interval&) = default;
};

struct EstimateReport {
    EstimatorKind estimator = EstimatorKind::dr;
    double theta_hat = 0.0;
    std::size_t n = 0;
    std::size_t G = 0;
    VarianceMethod variance_method = VarianceMethod::none;
    std::optional<double> variance;  // of the point estimate
    double ci_level = 0.95;
    std::optional<Interval> ci;  // Wald: symmetric about theta_hat
    bool degenerate_variance = false;
};

/// phi = r (y - mu_hat) / pi_hat + mu_hat for every individual; exactly
/// mu_hat when r = 0.
[[nodiscard]] InfluencePanel influence_values(const ClusteredDataset& dataset,
                                              const NuisancePredictions& predictions);

/// Mean of mu_hat over all n individuals (regression imputation).
[[nodiscard]] EstimateReport estimate_plugin(const ClusteredDataset& dataset, const NuisancePredictions& predictions);
/// (1/n) sum of r y / pi_hat; unobserved individuals contribute zero.
[[nodiscard]] EstimateReport estimate_ipw(const ClusteredDataset& dataset, const NuisancePredictions& predictions);
/// Mean of influence_values(dataset, predictions).
[[nodiscard]] EstimateReport estimate_dr(const ClusteredDataset& dataset, const NuisancePredictions& predictions);

/// Per-individual contributions whose mean is the named estimator
/// (mu_hat, r y / pi_hat, or phi). Used by the fixed-nuisance bootstrap.
[[nodiscard]] InfluencePanel estimator_contributions(EstimatorKind kind, const ClusteredDataset& dataset,
                                                     const NuisancePredictions& predictions);

// History summary S_t of a cluster prefix. Components are emitted in the
// order: running max, running min, running mean, last-d window, past (R, RY).
struct SummaryConfig {
    bool running_max = false;   // max over all entries of W_1..W_t
    bool running_min = false;   // min over all entries of W_1..W_t
    bool running_mean = false;  // componentwise mean of W_1..W_t
    bool last_d_window = false; // W_t, W_{t-1}, ..., W_{t-d+1}; zero-padded
    std::size_t window_d = 1;
    bool include_past_ry = false;  // mean of R and of R*Y over s < t (zeros at t = 1)

    /// (max, min, mean): the summary used for the sequential simulation.
    static SummaryConfig max_min_mean();
    /// The current W only; reduces the sequential estimator to estimate_dr.
    static SummaryConfig current_only();

    [[nodiscard]] std::size_t output_dim(std::size_t w_dim) const noexcept;
    [[nodiscard]] std::vector<std::string> component_names() const;
};

/// Summary of the first t members (1 <= t <= n_g, one-based like the
/// history it summarizes). Uses W up to t and R, Y strictly before t.
[[nodiscard]] std::vector<double> summarize_history(const Cluster& cluster, std::size_t t,
                                                    const SummaryConfig& config);

/// Copy of `dataset` with every individual's covariates replaced by its
/// history summary S_t (r and y unchanged).
[[nodiscard]] ClusteredDataset summarized_dataset(const ClusteredDataset& dataset, const SummaryConfig& config);

struct SequentialResult {
    EstimateReport report;
    InfluencePanel panel;
    NuisancePredictions predictions;
};

/// Doubly robust estimate of the average outcome under sequential
/// missingness: cross-fits pi(x, S) and mu(x, S) at cluster level and
/// averages the influence values.
[[nodiscard]] SequentialResult estimate_dr_sequential(const ClusteredDataset& dataset, const SummaryConfig& summary,
                                                      const CrossFitOptions& options);

/// Mean of y over observed individuals (ignores missingness).
[[nodiscard]] double observed_mean(const ClusteredDataset& dataset);

}  // namespace clusterdr
