#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clusterdr/core_data.hpp"
#include "clusterdr/estimators.hpp"
#include "clusterdr/nuisance.hpp"

namespace clusterdr {

// X ~ N(0,1); W | X ~ N(X 1, sigma2 * rho^|i-j|) by AR(1) recursion;
// R ~ Bernoulli(logistic(beta_pi . (x, w))); Y ~ N(beta_mu . (x, w, 1), sd^2).
struct HomogeneousDgp {
    double rho = 0.8;
    double sigma2 = 4.0;
    std::vector<double> beta_pi{1.0, 0.5};        // x, w
    std::vector<double> beta_mu{-1.0, 1.0, 0.5};  // x, w, intercept
    double y_noise_sd = 1.0;
    double alpha = 0.4;
    double theta_true = 0.5;

    [[nodiscard]] double pi(double x, double w) const;
    [[nodiscard]] double mu(double x, double w) const;
    [[nodiscard]] KnownNuisance oracle() const;
};

// Same covariate process, quadratic in W:
// mu = -x + w^2, pi = logistic(x + 0.5 w^2).
struct QuadraticDgp {
    double rho = 0.8;
    double sigma2 = 4.0;
    std::vector<double> beta_pi{1.0, 0.5};        // x, w^2
    std::vector<double> beta_mu{-1.0, 1.0, 0.0};  // x, w^2, intercept
    double y_noise_sd = 1.0;
    double theta_true = 5.0;

    [[nodiscard]] double pi(double x, double w) const;
    [[nodiscard]] double mu(double x, double w) const;
    [[nodiscard]] KnownNuisance oracle() const;
};

// Bivariate AR(2) covariates W_t = A1 W_{t-1} + A2 W_{t-2} + e_t with
// W_0 = W_{-1} = 0, e_t ~ N(0, eps_cov_scale * I). S_t = (max, min, mean).
struct SequentialDgp {
    Eigen::Matrix2d a1 = 0.5 * Eigen::Matrix2d::Identity();
    Eigen::Matrix2d a2 = 0.2 * Eigen::Matrix2d::Identity();
    double eps_cov_scale = 4.0;
    std::vector<double> beta_pi{1.0, 1.0, 0.8, -0.5, 0.3};    // x, S
    std::vector<double> beta_mu{-1.0, 1.0, 1.0, -0.5, -0.4};  // x, S
    double mu_intercept = 1.0;
    double y_noise_sd = 1.0;
    double alpha = 0.4;
    double psi_true = 1.0;

    /// Spectral radius of the AR(2) companion matrix.
    [[nodiscard]] double spectral_radius() const;
    [[nodiscard]] KnownNuisance oracle() const;  // functions of (x, S)
};

struct SimulatedData {
    ClusteredDataset dataset;
    double truth = 0.0;
    // Every individual's outcome, observed or not, in dataset order. Kept
    // out of the dataset so estimation never sees unobserved outcomes.
    std::vector<double> full_outcomes;
};

/// n_g = floor(n^alpha) clusters of equal size; the last cluster absorbs
/// the remainder so the sizes sum to n.
[[nodiscard]] std::vector<std::size_t> power_law_cluster_sizes(std::size_t n, double alpha);
/// floor(n / n_g) clusters of size n_g, the last absorbing the remainder.
[[nodiscard]] std::vector<std::size_t> fixed_cluster_sizes(std::size_t n, std::size_t n_g);

[[nodiscard]] SimulatedData gen_homogeneous(const HomogeneousDgp& spec, std::size_t n, std::uint64_t seed,
                                            std::uint64_t replication = 0);
[[nodiscard]] SimulatedData gen_sequential(const SequentialDgp& spec, std::size_t n, std::uint64_t seed,
                                           std::uint64_t replication = 0);
[[nodiscard]] SimulatedData gen_quadratic(const QuadraticDgp& spec, std::size_t n, std::size_t n_g,
                                          std::uint64_t seed, std::uint64_t replication = 0);

// ---------------------------------------------------------------------------
// Monte Carlo harness

enum class Metric { coverage, rmse, mse };
[[nodiscard]] std::string_view to_string(Metric metric) noexcept;

struct ArmResult {
    std::string label;
    std::string estimator;
    std::string specification;  // variance method, summary, or nuisance spec
    std::string x_name;         // "alpha" or "n"
    double x_value = 0.0;
    Metric metric = Metric::mse;
    double value = 0.0;
    double mc_se = 0.0;
    std::size_t successes = 0;  // replications that produced an estimate
    std::size_t failures = 0;
};

struct MonteCarloReport {
    std::string experiment;
    std::size_t replications = 0;
    std::uint64_t seed = 0;
    double truth = 0.0;
    std::vector<ArmResult> arms;
};

struct CoverageOptions {
    std::size_t n = 10000;
    std::vector<double> alphas{0.2, 0.4};
    std::size_t replications = 300;
    double level = 0.95;
    int folds = 2;
    double clip_epsilon = kDefaultClipEpsilon;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};
[[nodiscard]] MonteCarloReport run_coverage_experiment(const HomogeneousDgp& spec, const CoverageOptions& options);

struct RmseOptions {
    std::vector<std::size_t> n_grid{4000, 8000};
    std::size_t replications = 200;
    int folds = 2;
    double clip_epsilon = kDefaultClipEpsilon;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};
[[nodiscard]] MonteCarloReport run_rmse_experiment(const SequentialDgp& spec, const RmseOptions& options);

struct MisspecOptions {
    std::size_t n = 10000;
    std::size_t n_g = 100;
    std::size_t replications = 200;
    int folds = 2;
    double clip_epsilon = kDefaultClipEpsilon;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};
[[nodiscard]] MonteCarloReport run_misspec_experiment(const QuadraticDgp& spec, const MisspecOptions& options);

/// Label of a misspecification arm, e.g. "mu_correct/pi_wrong".
[[nodiscard]] std::string misspec_label(bool mu_correct, bool pi_correct);
[[nodiscard]] const ArmResult& find_arm(const MonteCarloReport& report, std::string_view label);

// ---------------------------------------------------------------------------
// Omega_n scaling diagnostics on synthetic influence panels

enum class DependenceKind { iid_within, perfect_correlation, inverse_gap, heterogeneous };
[[nodiscard]] std::string_view to_string(DependenceKind kind) noexcept;
[[nodiscard]] DependenceKind parse_dependence_kind(std::string_view name);

struct OmegaPoint {
    std::size_t n = 0;
    std::size_t num_clusters = 0;
    double omega = 0.0;      // brute-force estimate
    double omega_se = 0.0;
    double reference = 0.0;  // closed form for the covariance actually sampled
};

struct OmegaDiagnosticReport {
    DependenceKind kind = DependenceKind::iid_within;
    double alpha = 0.5;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    std::vector<OmegaPoint> points;
    std::string regressor;  // "log_n" or "log_log_n"
    double slope = 0.0;
    double slope_se = 0.0;
    double log_n_correlation = 0.0;  // corr(omega, log n) over the grid
    // inverse_gap: the target covariance 1/|t-s| is indefinite for n_g >= 3;
    // panels are drawn from its PSD projection and this flag says so.
    bool covariance_projected = false;
};

struct OmegaDiagnosticOptions {
    DependenceKind kind = DependenceKind::iid_within;
    double alpha = 0.5;
    std::vector<std::size_t> n_grid{1000, 4000, 16000, 64000};
    std::size_t reps = 200;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

[[nodiscard]] OmegaDiagnosticReport omega_scaling_diagnostic(const OmegaDiagnosticOptions& options);

/// Brute-force Omega_n = (1/n) sum_g Var(sum_i phi_gi) from independent
/// oracle datasets of the homogeneous DGP (per-cluster-slot variances across
/// datasets).
struct OmegaMonteCarlo {
    double omega = 0.0;
    double omega_se = 0.0;  // Monte Carlo standard error (mean_omega_hat only)
    double theta_mean = 0.0;
    std::size_t datasets = 0;
};
[[nodiscard]] OmegaMonteCarlo brute_force_omega(const HomogeneousDgp& spec, std::size_t n, std::size_t datasets,
                                                std::uint64_t seed, unsigned threads = 1,
                                                double clip_epsilon = 1e-12);

/// Average of the cluster-robust omega_hat over independent homogeneous
/// datasets evaluated with oracle nuisances.
[[nodiscard]] OmegaMonteCarlo mean_omega_hat(const HomogeneousDgp& spec, std::size_t n, std::size_t datasets,
                                             std::uint64_t seed, unsigned threads = 1, double clip_epsilon = 1e-12);

}  // namespace clusterdr
