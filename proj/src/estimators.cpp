#include "clusterdr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clusterdr/errors.hpp"
#include "clusterdr/numeric.hpp"

namespace clusterdr {

std::string_view to_string(EstimatorKind kind) noexcept
{
    switch (kind) {
    case EstimatorKind::plugin: return "plugin";
    case EstimatorKind::ipw: return "ipw";
    case EstimatorKind::dr: return "dr";
    case EstimatorKind::dr_sequential: return "dr_sequential";
    }
    return "?";
}

std::string_view to_string(VarianceMethod method) noexcept
{
    switch (method) {
    case VarianceMethod::none: return "none";
    case VarianceMethod::iid: return "iid";
    case VarianceMethod::cluster_robust: return "cluster_robust";
    case VarianceMethod::cluster_bootstrap: return "cluster_bootstrap";
    }
    return "?";
}

EstimatorKind parse_estimator_kind(std::string_view name)
{
    for (auto kind : {EstimatorKind::plugin, EstimatorKind::ipw, EstimatorKind::dr, EstimatorKind::dr_sequential})
        if (to_string(kind) == name)
            return kind;
    throw ValidationError("unknown estimator '" + std::string(name) + "'");
}

VarianceMethod parse_variance_method(std::string_view name)
{
    for (auto method : {VarianceMethod::none, VarianceMethod::iid, VarianceMethod::cluster_robust,
                        VarianceMethod::cluster_bootstrap})
        if (to_string(method) == name)
            return method;
    throw ValidationError("unknown variance method '" + std::string(name) + "'");
}

namespace {

void check_alignment(const ClusteredDataset& dataset, const NuisancePredictions& predictions)
{
    if (predictions.pi_hat.size() != dataset.num_individuals() ||
        predictions.mu_hat.size() != dataset.num_individuals())
        throw ValidationError("predictions (" + std::to_string(predictions.pi_hat.size()) + ", " +
                              std::to_string(predictions.mu_hat.size()) + ") not aligned with " +
                              std::to_string(dataset.num_individuals()) + " individuals");
}

double positive_propensity(double pi, std::size_t index)
{
    if (!(pi > 0.0))
        throw ValidationError("pi_hat must be positive (individual " + std::to_string(index) + ")");
    return pi;
}

EstimateReport point_report(EstimatorKind kind, const ClusteredDataset& dataset, const InfluencePanel& contributions)
{
    EstimateReport report;
    report.estimator = kind;
    report.n = dataset.num_individuals();
    report.G = dataset.num_clusters();
    report.theta_hat = compensated_mean(contributions.values());
    return report;
}

}  // namespace

InfluencePanel estimator_contributions(EstimatorKind kind, const ClusteredDataset& dataset,
                                       const NuisancePredictions& predictions)
{
    check_alignment(dataset, predictions);
    std::vector<double> values;
    values.reserve(dataset.num_individuals());
    std::size_t index = 0;
    for (const auto& c : dataset.clusters()) {
        for (const auto& m : c.members) {
            const double pi = predictions.pi_hat[index];
            const double mu = predictions.mu_hat[index];
            switch (kind) {
            case EstimatorKind::plugin:
                values.push_back(mu);
                break;
            case EstimatorKind::ipw:
                positive_propensity(pi, index);
                values.push_back(m.r ? *m.y / pi : 0.0);
                break;
            case EstimatorKind::dr:
            case EstimatorKind::dr_sequential:
                positive_propensity(pi, index);
                values.push_back(m.r ? (*m.y - mu) / pi + mu : mu);
                break;
            }
            ++index;
        }
    }
    return InfluencePanel::shaped_like(dataset, std::move(values));
}

InfluencePanel influence_values(const ClusteredDataset& dataset, const NuisancePredictions& predictions)
{
    return estimator_contributions(EstimatorKind::dr, dataset, predictions);
}

EstimateReport estimate_plugin(const ClusteredDataset& dataset, const NuisancePredictions& predictions)
{
    return point_report(EstimatorKind::plugin, dataset,
                        estimator_contributions(EstimatorKind::plugin, dataset, predictions));
}

EstimateReport estimate_ipw(const ClusteredDataset& dataset, const NuisancePredictions& predictions)
{
    return point_report(EstimatorKind::ipw, dataset, estimator_contributions(EstimatorKind::ipw, dataset, predictions));
}

EstimateReport estimate_dr(const ClusteredDataset& dataset, const NuisancePredictions& predictions)
{
    return point_report(EstimatorKind::dr, dataset, influence_values(dataset, predictions));
}

SummaryConfig SummaryConfig::max_min_mean()
{
    SummaryConfig config;
    config.running_max = true;
    config.running_min = true;
    config.running_mean = true;
    return config;
}

SummaryConfig SummaryConfig::current_only()
{
    SummaryConfig config;
    config.last_d_window = true;
    config.window_d = 1;
    return config;
}

std::size_t SummaryConfig::output_dim(std::size_t w_dim) const noexcept
{
    return (running_max ? 1 : 0) + (running_min ? 1 : 0) + (running_mean ? w_dim : 0) +
           (last_d_window ? window_d * w_dim : 0) + (include_past_ry ? 2 : 0);
}

std::vector<std::string> SummaryConfig::component_names() const
{
    std::vector<std::string> names;
    if (running_max) names.emplace_back("running_max");
    if (running_min) names.emplace_back("running_min");
    if (running_mean) names.emplace_back("running_mean");
    if (last_d_window) names.emplace_back("last_d_window");
    return names;
}

std::vector<double> summarize_history(const Cluster& cluster, std::size_t t, const SummaryConfig& config)
{
    if (t < 1 || t > cluster.size())
        throw ValidationError("summarize_history: t = " + std::to_string(t) + " outside 1.." +
                              std::to_string(cluster.size()));
    if (config.last_d_window && config.window_d < 1)
        throw ValidationError("summarize_history: window_d must be at least 1");
    const std::size_t w_dim = cluster.members.front().w.size();
    if (config.output_dim(w_dim) == 0)
        throw ValidationError("summarize_history: empty summary configuration");
    std::vector<double> summary;
    summary.reserve(config.output_dim(w_dim));

    if (config.running_max || config.running_min) {
        double hi = -std::numeric_limits<double>::infinity();
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < t; ++s) {
            for (const double v : cluster.members[s].w) {
                hi = std::max(hi, v);
                lo = std::min(lo, v);
            }
        }
        if (config.running_max) summary.push_back(hi);
        if (config.running_min) summary.push_back(lo);
    }
    if (config.running_mean) {
        for (std::size_t k = 0; k < w_dim; ++k) {
            KahanSum acc;
            for (std::size_t s = 0; s < t; ++s)
                acc.add(cluster.members[s].w[k]);
            summary.push_back(acc.value() / static_cast<double>(t));
        }
    }
    if (config.last_d_window) {
        for (std::size_t lag = 0; lag < config.window_d; ++lag) {
            if (lag < t) {
                const auto& w = cluster.members[t - 1 - lag].w;
                summary.insert(summary.end(), w.begin(), w.end());
            } else {
                summary.insert(summary.end(), w_dim, 0.0);
            }
        }
    }
    if (config.include_past_ry) {
        KahanSum r_acc;
        KahanSum ry_acc;
        for (std::size_t s = 0; s + 1 < t; ++s) {
            const auto& m = cluster.members[s];
            r_acc.add(m.r ? 1.0 : 0.0);
            ry_acc.add(m.r ? *m.y : 0.0);
        }
        const double past = static_cast<double>(t - 1);
        summary.push_back(t > 1 ? r_acc.value() / past : 0.0);
        summary.push_back(t > 1 ? ry_acc.value() / past : 0.0);
    }
    return summary;
}

ClusteredDataset summarized_dataset(const ClusteredDataset& dataset, const SummaryConfig& config)
{
    std::vector<Cluster> clusters;
    clusters.reserve(dataset.num_clusters());
    for (const auto& c : dataset.clusters()) {
        Cluster out{c.id, c.x, {}};
        out.members.reserve(c.size());
        for (std::size_t t = 1; t <= c.size(); ++t) {
            const auto& m = c.members[t - 1];
            out.members.push_back(IndividualRecord{summarize_history(c, t, config), m.r, m.y, m.time_index});
        }
        clusters.push_back(std::move(out));
    }
    return ClusteredDataset(std::move(clusters));
}

SequentialResult estimate_dr_sequential(const ClusteredDataset& dataset, const SummaryConfig& summary,
                                        const CrossFitOptions& options)
{
    validate(dataset);
    const ClusteredDataset z = summarized_dataset(dataset, summary);
    CrossFitResult fitted = cross_fit(z, options);
    InfluencePanel panel = influence_values(z, fitted.predictions);
    EstimateReport report = point_report(EstimatorKind::dr_sequential, dataset, panel);
    return SequentialResult{report, std::move(panel), std::move(fitted.predictions)};
}

double observed_mean(const ClusteredDataset& dataset)
{
    KahanSum acc;
    std::size_t count = 0;
    for (const auto& c : dataset.clusters())
        for (const auto& m : c.members)
            if (m.r) {
                acc.add(*m.y);
                ++count;
            }
    if (count == 0)
        throw EstimationError("observed_mean: no observed outcomes");
    return acc.value() / static_cast<double>(count);
}

}  // namespace clusterdr
