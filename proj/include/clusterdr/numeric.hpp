#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace clusterdr {

// Compensated (Neumaier) accumulator. All n-sized sums in the library go
// through this in a fixed order so results are bit-reproducible.
class KahanSum {
public:
    void add(double value) noexcept
    {
        const double t = sum_ + value;
        if (std::fabs(sum_) >= std::fabs(value))
            compensation_ += (sum_ - t) + value;
        else
            compensation_ += (value - t) + sum_;
        sum_ = t;
    }
    KahanSum& operator+=(double value) noexcept
    {
        add(value);
        return *this;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + compensation_; }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

[[nodiscard]] double compensated_sum(std::span<const double> values) noexcept;
[[nodiscard]] double compensated_mean(std::span<const double> values) noexcept;

inline double logistic(double eta) noexcept
{
    if (eta >= 0.0) {
        return 1.0 / (1.0 + std::exp(-eta));
    }
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
inline double softplus(double eta) noexcept
{
    return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

/// Standard normal quantile by Wichura's AS 241 (PPND16) rational
/// approximation, relative accuracy about 1e-16 over (0, 1).
/// Throws ValidationError outside the open unit interval.
[[nodiscard]] double normal_quantile(double p);

// Sample quantile with linear interpolation between order statistics
// (Hyndman-Fan type 7). `sorted` must be ascending and nonempty.
[[nodiscard]] double sorted_quantile(std::span<const double> sorted, double prob);

}  // namespace clusterdr
