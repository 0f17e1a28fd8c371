#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace clusterdr {

// Named substreams. Every random decision in the library draws from a
// stream keyed by (seed, replication, role).
enum class StreamRole : std::uint32_t {
    covariates = 1,
    missingness = 2,
    outcomes = 3,
    split = 4,
    bootstrap = 5,
    panel = 6,
};

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
[[nodiscard]] PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key) noexcept;

/// SplitMix64 finalizer; used to derive child seeds.
[[nodiscard]] std::uint64_t mix64(std::uint64_t value) noexcept;

/// Deterministic child seed for nested experiment loops.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept;

/// Counter-based random stream. The counter's upper 64 bits hold the
/// replication index and the lower 64 bits the block index, so streams for
/// different replications never overlap and can be generated in any order.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t replication, StreamRole role) noexcept;

    std::uint32_t next_u32() noexcept;
    std::uint64_t next_u64() noexcept;
    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    /// Standard normal (Box-Muller; the second variate is cached).
    double normal() noexcept;
    bool bernoulli(double p) noexcept { return uniform() < p; }
    /// Uniform integer in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound) noexcept;

private:
    void refill() noexcept;

    PhiloxKey key_{};
    std::uint64_t replication_ = 0;
    std::uint64_t block_ = 0;
    PhiloxCounter buffer_{};
    int position_ = 4;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace clusterdr
