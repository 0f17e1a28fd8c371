#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace clusterdr {

// One individual's observed data. `y` is present exactly when `r` is true;
// outcomes of unobserved individuals are never stored.
struct IndividualRecord {
    std::vector<double> w;
    bool r = false;
    std::optional<double> y;
    std::size_t time_index = 0;  // 0-based position within the cluster
};

// Members are kept in sampling/time order, so the prefix members[0..t]
// is the cluster's history at time t.
struct Cluster {
    std::string id;
    std::vector<double> x;
    std::vector<IndividualRecord> members;

    [[nodiscard]] std::size_t size() const noexcept { return members.size(); }
};

/// Immutable collection of clusters. Construction does not validate; call
/// validate() (or use an operation that does) before estimation.
class ClusteredDataset {
public:
    ClusteredDataset() = default;
    explicit ClusteredDataset(std::vector<Cluster> clusters);

    [[nodiscard]] const std::vector<Cluster>& clusters() const noexcept { return clusters_; }
    [[nodiscard]] const Cluster& cluster(std::size_t g) const { return clusters_.at(g); }
    [[nodiscard]] std::size_t num_clusters() const noexcept { return clusters_.size(); }
    [[nodiscard]] std::size_t num_individuals() const noexcept { return n_; }
    /// Offset of cluster g's first member in flat (cluster-major) order;
    /// offsets()[G] == n.
    [[nodiscard]] const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
    [[nodiscard]] std::size_t x_dim() const noexcept;
    [[nodiscard]] std::size_t w_dim() const noexcept;

private:
    std::vector<Cluster> clusters_;
    std::vector<std::size_t> offsets_{0};
    std::size_t n_ = 0;
};

/// Per-individual values aligned to a dataset, stored flat in dataset order.
class InfluencePanel {
public:
    InfluencePanel() = default;
    InfluencePanel(std::vector<double> values, std::vector<std::size_t> offsets);

    /// Panel whose shape mirrors `dataset`.
    static InfluencePanel shaped_like(const ClusteredDataset& dataset, std::vector<double> values);
    /// Panel built from explicit per-cluster value lists.
    static InfluencePanel from_clusters(const std::vector<std::vector<double>>& clusters);

    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::span<const double> cluster_values(std::size_t g) const;
    [[nodiscard]] std::size_t num_clusters() const noexcept { return offsets_.size() - 1; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::size_t cluster_size(std::size_t g) const { return offsets_.at(g + 1) - offsets_.at(g); }
    [[nodiscard]] const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
    /// Compensated sum over cluster g, in member order.
    [[nodiscard]] double cluster_sum(std::size_t g) const;
    [[nodiscard]] bool aligned_with(const ClusteredDataset& dataset) const noexcept;

private:
    std::vector<double> values_;
    std::vector<std::size_t> offsets_{0};
};

/// Throws ValidationError describing the first violated invariant, with
/// cluster/individual indices.
void validate(const ClusteredDataset& dataset);

[[nodiscard]] std::vector<std::size_t> cluster_sizes(const ClusteredDataset& dataset);

struct ClusterSplit {
    std::vector<std::size_t> first;   // sorted, round(fraction * G) clusters
    std::vector<std::size_t> second;  // sorted, the rest
};

/// Random partition of cluster indices, deterministic given the seed.
[[nodiscard]] ClusterSplit split_clusters(const ClusteredDataset& dataset, double fraction, std::uint64_t seed);

/// Cluster indices in a seeded random order; the basis of all splits and folds.
[[nodiscard]] std::vector<std::size_t> permuted_clusters(std::size_t num_clusters, std::uint64_t seed);

}  // namespace clusterdr
