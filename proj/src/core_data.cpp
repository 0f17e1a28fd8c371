#include "clusterdr/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "clusterdr/errors.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/rng.hpp"

namespace clusterdr {

ClusteredDataset::ClusteredDataset(std::vector<Cluster> clusters) : clusters_(std::move(clusters))
{
    offsets_.reserve(clusters_.size() + 1);
    for (const auto& c : clusters_) {
        n_ += c.members.size();
        offsets_.push_back(n_);
    }
}

std::size_t ClusteredDataset::x_dim() const noexcept
{
    return clusters_.empty() ? 0 : clusters_.front().x.size();
}

std::size_t ClusteredDataset::w_dim() const noexcept
{
    for (const auto& c : clusters_)
        if (!c.members.empty())
            return c.members.front().w.size();
    return 0;
}

InfluencePanel::InfluencePanel(std::vector<double> values, std::vector<std::size_t> offsets)
    : values_(std::move(values)), offsets_(std::move(offsets))
{
    if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != values_.size() ||
        !std::is_sorted(offsets_.begin(), offsets_.end()))
        throw ValidationError("InfluencePanel: offsets do not describe the value vector");
}

InfluencePanel InfluencePanel::shaped_like(const ClusteredDataset& dataset, std::vector<double> values)
{
    if (values.size() != dataset.num_individuals())
        throw ValidationError("InfluencePanel: " + std::to_string(values.size()) + " values for " +
                              std::to_string(dataset.num_individuals()) + " individuals");
    return InfluencePanel(std::move(values), dataset.offsets());
}

InfluencePanel InfluencePanel::from_clusters(const std::vector<std::vector<double>>& clusters)
{
    std::vector<double> values;
    std::vector<std::size_t> offsets{0};
    for (const auto& c : clusters) {
        values.insert(values.end(), c.begin(), c.end());
        offsets.push_back(values.size());
    }
    return InfluencePanel(std::move(values), std::move(offsets));
}

std::span<const double> InfluencePanel::cluster_values(std::size_t g) const
{
    return std::span<const double>(values_).subspan(offsets_.at(g), cluster_size(g));
}

double InfluencePanel::cluster_sum(std::size_t g) const
{
    return compensated_sum(cluster_values(g));
}

bool InfluencePanel::aligned_with(const ClusteredDataset& dataset) const noexcept
{
    return offsets_ == dataset.offsets();
}

void validate(const ClusteredDataset& dataset)
{
    const auto& clusters = dataset.clusters();
    if (clusters.empty())
        throw ValidationError("dataset has no clusters");

    const std::size_t x_dim = clusters.front().x.size();
    const std::size_t w_dim = dataset.w_dim();
    auto where = [](std::size_t g, std::size_t i) {
        std::ostringstream os;
        os << " (cluster " << g << ", individual " << i << ")";
        return os.str();
    };

    for (std::size_t g = 0; g < clusters.size(); ++g) {
        const auto& c = clusters[g];
        if (c.members.empty())
            throw ValidationError("empty cluster (cluster " + std::to_string(g) + ")");
        if (c.x.size() != x_dim)
            throw ValidationError("cluster covariate dimension mismatch (cluster " + std::to_string(g) + ")");
        for (const double v : c.x)
            if (!std::isfinite(v))
                throw ValidationError("non-finite cluster covariate (cluster " + std::to_string(g) + ")");

        for (std::size_t i = 0; i < c.members.size(); ++i) {
            const auto& m = c.members[i];
            if (m.w.size() != w_dim)
                throw ValidationError("covariate dimension mismatch" + where(g, i));
            if (m.time_index != i)
                throw ValidationError("time_index out of order" + where(g, i));
            for (const double v : m.w)
                if (!std::isfinite(v))
                    throw ValidationError("non-finite covariate" + where(g, i));
            if (!m.r && m.y)
                throw ValidationError("outcome present but marked missing" + where(g, i));
            if (m.r && !m.y)
                throw ValidationError("outcome absent but marked observed" + where(g, i));
            if (m.y && !std::isfinite(*m.y))
                throw ValidationError("non-finite outcome" + where(g, i));
        }
    }
}

std::vector<std::size_t> cluster_sizes(const ClusteredDataset& dataset)
{
    std::vector<std::size_t> sizes;
    sizes.reserve(dataset.num_clusters());
    for (const auto& c : dataset.clusters())
        sizes.push_back(c.size());
    return sizes;
}

std::vector<std::size_t> permuted_clusters(std::size_t num_clusters, std::uint64_t seed)
{
    std::vector<std::size_t> order(num_clusters);
    std::iota(order.begin(), order.end(), std::size_t{0});
    RandomStream stream(seed, 0, StreamRole::split);
    // Fisher-Yates with our own stream: std::shuffle is not specified
    // identically across standard libraries.
    for (std::size_t i = num_clusters; i > 1; --i) {
        const auto j = static_cast<std::size_t>(stream.below(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

ClusterSplit split_clusters(const ClusteredDataset& dataset, double fraction, std::uint64_t seed)
{
    const std::size_t G = dataset.num_clusters();
    if (G < 2)
        throw ValidationError("split_clusters: need at least 2 clusters, got " + std::to_string(G));
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("split_clusters: fraction must lie in (0, 1)");

    const auto order = permuted_clusters(G, seed);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(G)));
    ClusterSplit split;
    split.first.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    split.second.assign(order.begin() + static_cast<std::ptrdiff_t>(take), order.end());
    std::sort(split.first.begin(), split.first.end());
    std::sort(split.second.begin(), split.second.end());
    return split;
}

}  // namespace clusterdr
