#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "clusterdr/errors.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/rng.hpp"
#include "clusterdr/simulation.hpp"

namespace clusterdr {

namespace {

std::size_t floor_power(std::size_t n, double alpha)
{
    const double raw = std::pow(static_cast<double>(n), alpha);
    const double nearest = std::round(raw);
    // pow(10000, 0.5) must give 100, not 99.99999999999999.
    return static_cast<std::size_t>(std::fabs(raw - nearest) < 1e-9 * std::max(1.0, raw) ? nearest : std::floor(raw));
}

void check_coefficients(const std::vector<double>& beta, std::size_t expected, const char* what)
{
    if (beta.size() != expected)
        throw ValidationError(std::string(what) + ": expected " + std::to_string(expected) + " coefficients, got " +
                              std::to_string(beta.size()));
}

// AR(1) covariate path around the cluster mean x with stationary variance
// sigma2 and lag-k correlation rho^k.
void ar1_path(RandomStream& stream, double x, double rho, double sigma, std::size_t size, std::vector<double>& out)
{
    out.resize(size);
    const double innovation_sd = sigma * std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < size; ++i) {
        const double e = stream.normal();
        out[i] = i == 0 ? x + sigma * e : x + rho * (out[i - 1] - x) + innovation_sd * e;
    }
}

void check_covariate_process(double rho, double sigma2)
{
    if (!(rho > -1.0 && rho < 1.0))
        throw ValidationError("rho must lie in (-1, 1)");
    if (!(sigma2 > 0.0))
        throw ValidationError("sigma2 must be positive");
}

template <class Dgp>
SimulatedData generate_scalar_w(const Dgp& spec, const std::vector<std::size_t>& sizes, std::uint64_t seed,
                                std::uint64_t replication)
{
    check_covariate_process(spec.rho, spec.sigma2);
    if (!(spec.y_noise_sd >= 0.0))
        throw ValidationError("y_noise_sd must be nonnegative");
    RandomStream covariates(seed, replication, StreamRole::covariates);
    RandomStream missingness(seed, replication, StreamRole::missingness);
    RandomStream outcomes(seed, replication, StreamRole::outcomes);
    const double sigma = std::sqrt(spec.sigma2);

    SimulatedData out;
    out.truth = spec.theta_true;
    std::vector<Cluster> clusters;
    clusters.reserve(sizes.size());
    std::vector<double> path;
    std::size_t total = 0;
    for (const auto s : sizes)
        total += s;
    out.full_outcomes.reserve(total);

    for (std::size_t g = 0; g < sizes.size(); ++g) {
        const double x = covariates.normal();
        ar1_path(covariates, x, spec.rho, sigma, sizes[g], path);
        Cluster cluster{std::to_string(g), {x}, {}};
        cluster.members.reserve(sizes[g]);
        for (std::size_t i = 0; i < sizes[g]; ++i) {
            const double w = path[i];
            const bool r = missingness.bernoulli(spec.pi(x, w));
            const double y = spec.mu(x, w) + spec.y_noise_sd * outcomes.normal();
            out.full_outcomes.push_back(y);
            cluster.members.push_back(IndividualRecord{{w}, r, r ? std::optional<double>(y) : std::nullopt, i});
        }
        clusters.push_back(std::move(cluster));
    }
    out.dataset = ClusteredDataset(std::move(clusters));
    return out;
}

double dot_xs(const std::vector<double>& beta, double x, std::span<const double> s)
{
    double acc = beta[0] * x;
    for (std::size_t k = 0; k < s.size(); ++k)
        acc += beta[k + 1] * s[k];
    return acc;
}

}  // namespace

std::vector<std::size_t> fixed_cluster_sizes(std::size_t n, std::size_t n_g)
{
    if (n_g < 1)
        throw ValidationError("cluster size must be at least 1");
    if (n < n_g)
        throw ValidationError("n = " + std::to_string(n) + " is smaller than one cluster of size " +
                              std::to_string(n_g));
    std::vector<std::size_t> sizes(n / n_g, n_g);
    sizes.back() += n % n_g;
    return sizes;
}

std::vector<std::size_t> power_law_cluster_sizes(std::size_t n, double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ValidationError("alpha must lie in (0, 1)");
    if (n < 2)
        throw ValidationError("n must be at least 2");
    const std::size_t n_g = floor_power(n, alpha);
    if (n_g < 1)
        throw ValidationError("floor(n^alpha) < 1");
    return fixed_cluster_sizes(n, n_g);
}

double HomogeneousDgp::pi(double x, double w) const
{
    return logistic(beta_pi[0] * x + beta_pi[1] * w);
}

double HomogeneousDgp::mu(double x, double w) const
{
    return beta_mu[0] * x + beta_mu[1] * w + beta_mu[2];
}

KnownNuisance HomogeneousDgp::oracle() const
{
    const HomogeneousDgp self = *this;
    return KnownNuisance{
        [self](std::span<const double> x, std::span<const double> w) { return self.pi(x[0], w[0]); },
        [self](std::span<const double> x, std::span<const double> w) { return self.mu(x[0], w[0]); }};
}

double QuadraticDgp::pi(double x, double w) const
{
    return logistic(beta_pi[0] * x + beta_pi[1] * w * w);
}

double QuadraticDgp::mu(double x, double w) const
{
    return beta_mu[0] * x + beta_mu[1] * w * w + beta_mu[2];
}

KnownNuisance QuadraticDgp::oracle() const
{
    const QuadraticDgp self = *this;
    return KnownNuisance{
        [self](std::span<const double> x, std::span<const double> w) { return self.pi(x[0], w[0]); },
        [self](std::span<const double> x, std::span<const double> w) { return self.mu(x[0], w[0]); }};
}

double SequentialDgp::spectral_radius() const
{
    Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
    companion.topLeftCorner<2, 2>() = a1;
    companion.topRightCorner<2, 2>() = a2;
    companion.bottomLeftCorner<2, 2>() = Eigen::Matrix2d::Identity();
    return Eigen::EigenSolver<Eigen::Matrix4d>(companion, false).eigenvalues().cwiseAbs().maxCoeff();
}

KnownNuisance SequentialDgp::oracle() const
{
    const SequentialDgp self = *this;
    return KnownNuisance{
        [self](std::span<const double> x, std::span<const double> s) {
            return logistic(dot_xs(self.beta_pi, x[0], s));
        },
        [self](std::span<const double> x, std::span<const double> s) {
            return dot_xs(self.beta_mu, x[0], s) + self.mu_intercept;
        }};
}

SimulatedData gen_homogeneous(const HomogeneousDgp& spec, std::size_t n, std::uint64_t seed,
                              std::uint64_t replication)
{
    check_coefficients(spec.beta_pi, 2, "homogeneous beta_pi");
    check_coefficients(spec.beta_mu, 3, "homogeneous beta_mu");
    return generate_scalar_w(spec, power_law_cluster_sizes(n, spec.alpha), seed, replication);
}

SimulatedData gen_quadratic(const QuadraticDgp& spec, std::size_t n, std::size_t n_g, std::uint64_t seed,
                            std::uint64_t replication)
{
    check_coefficients(spec.beta_pi, 2, "quadratic beta_pi");
    check_coefficients(spec.beta_mu, 3, "quadratic beta_mu");
    return generate_scalar_w(spec, fixed_cluster_sizes(n, n_g), seed, replication);
}

SimulatedData gen_sequential(const SequentialDgp& spec, std::size_t n, std::uint64_t seed, std::uint64_t replication)
{
    check_coefficients(spec.beta_pi, 5, "sequential beta_pi");
    check_coefficients(spec.beta_mu, 5, "sequential beta_mu");
    if (!(spec.eps_cov_scale > 0.0))
        throw ValidationError("eps_cov_scale must be positive");
    if (!(spec.spectral_radius() < 1.0))
        throw ValidationError("unstable AR(2) coefficients: companion spectral radius >= 1");

    const auto sizes = power_law_cluster_sizes(n, spec.alpha);
    RandomStream covariates(seed, replication, StreamRole::covariates);
    RandomStream missingness(seed, replication, StreamRole::missingness);
    RandomStream outcomes(seed, replication, StreamRole::outcomes);
    const double eps_sd = std::sqrt(spec.eps_cov_scale);

    SimulatedData out;
    out.truth = spec.psi_true;
    out.full_outcomes.reserve(n);
    std::vector<Cluster> clusters;
    clusters.reserve(sizes.size());

    for (std::size_t g = 0; g < sizes.size(); ++g) {
        const double x = covariates.normal();
        Cluster cluster{std::to_string(g), {x}, {}};
        cluster.members.reserve(sizes[g]);
        Eigen::Vector2d prev1 = Eigen::Vector2d::Zero();
        Eigen::Vector2d prev2 = Eigen::Vector2d::Zero();
        double hi = -std::numeric_limits<double>::infinity();
        double lo = std::numeric_limits<double>::infinity();
        KahanSum sum0, sum1;

        for (std::size_t t = 0; t < sizes[g]; ++t) {
            Eigen::Vector2d eps;
            eps[0] = eps_sd * covariates.normal();
            eps[1] = eps_sd * covariates.normal();
            const Eigen::Vector2d w = spec.a1 * prev1 + spec.a2 * prev2 + eps;
            prev2 = prev1;
            prev1 = w;

            hi = std::max({hi, w[0], w[1]});
            lo = std::min({lo, w[0], w[1]});
            sum0.add(w[0]);
            sum1.add(w[1]);
            const double count = static_cast<double>(t + 1);
            const double summary[4] = {hi, lo, sum0.value() / count, sum1.value() / count};

            const bool r = missingness.bernoulli(logistic(dot_xs(spec.beta_pi, x, summary)));
            const double y = dot_xs(spec.beta_mu, x, summary) + spec.mu_intercept + spec.y_noise_sd * outcomes.normal();
            out.full_outcomes.push_back(y);
            cluster.members.push_back(
                IndividualRecord{{w[0], w[1]}, r, r ? std::optional<double>(y) : std::nullopt, t});
        }
        clusters.push_back(std::move(cluster));
    }
    out.dataset = ClusteredDataset(std::move(clusters));
    return out;
}

}  // namespace clusterdr
