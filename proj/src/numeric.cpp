#include "clusterdr/numeric.hpp"

#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "clusterdr/errors.hpp"
#include "clusterdr/parallel.hpp"

namespace clusterdr {

double compensated_sum(std::span<const double> values) noexcept
{
    KahanSum acc;
    for (const double v : values)
        acc.add(v);
    return acc.value();
}

double compensated_mean(std::span<const double> values) noexcept
{
    return values.empty() ? 0.0 : compensated_sum(values) / static_cast<double>(values.size());
}

namespace {

template <std::size_t N>
double horner(const double (&coef)[N], double x) noexcept
{
    double acc = coef[N - 1];
    for (std::size_t i = N - 1; i-- > 0;)
        acc = acc * x + coef[i];
    return acc;
}

// AS 241 coefficients, lowest order first.
constexpr double kCentralNum[] = {
    3.3871328727963666080e0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
    1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
    3.3430575583588128105e+4, 2.5090809287301226727e+3};
constexpr double kCentralDen[] = {
    1.0, 4.2313330701600911252e+1, 6.8718700749205790830e+2, 5.3941960214247511077e+3,
    2.1213794301586595867e+4, 3.9307895800092710610e+4, 2.8729085735721942674e+4,
    5.2264952788528545610e+3};
constexpr double kIntermediateNum[] = {
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4};
constexpr double kIntermediateDen[] = {
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
    1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9};
constexpr double kTailNum[] = {
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7};
constexpr double kTailDen[] = {
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
    7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15};

}  // namespace

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0))
        throw ValidationError("normal_quantile: probability must lie in (0, 1), got " + std::to_string(p));

    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q * horner(kCentralNum, r) / horner(kCentralDen, r);
    }
    double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        value = horner(kIntermediateNum, r) / horner(kIntermediateDen, r);
    } else {
        r -= 5.0;
        value = horner(kTailNum, r) / horner(kTailDen, r);
    }
    return q < 0.0 ? -value : value;
}

double sorted_quantile(std::span<const double> sorted, double prob)
{
    if (sorted.empty())
        throw ValidationError("sorted_quantile: empty sample");
    if (!(prob >= 0.0 && prob <= 1.0))
        throw ValidationError("sorted_quantile: probability outside [0, 1]");
    const double h = prob * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

unsigned resolve_threads(unsigned requested)
{
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv(kThreadsEnvVar)) {
        char* end = nullptr;
        const long parsed = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && parsed > 0)
            return static_cast<unsigned>(parsed);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace clusterdr
