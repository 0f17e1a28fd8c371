#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clusterdr/core_data.hpp"

namespace clusterdr {

enum class FeatureKind { linear, quadratic_w, history_summary, custom };

// Signature of a user-registered feature map.
struct CustomFeatureMap {
    std::function<std::size_t(std::size_t x_dim, std::size_t v_dim)> output_dim;
    std::function<void(std::span<const double> x, std::span<const double> v, std::span<double> out)> apply;
};

/// Maps (cluster covariates x, individual covariates v) to a feature row.
/// `v` is W for the homogeneous estimators and the history summary S for
/// the sequential one.
///
///  - linear:          (x, v)
///  - quadratic_w:     (x, v, v*v)  elementwise squares of v
///  - history_summary: (x, v), declaring that v is a summary vector
///  - custom:          a map registered under a name
///
/// Maps are pure; the intercept is added by the fitting routines.
class FeatureMap {
public:
    FeatureMap() = default;
    static FeatureMap linear() { return FeatureMap(FeatureKind::linear, "linear"); }
    static FeatureMap quadratic_w() { return FeatureMap(FeatureKind::quadratic_w, "quadratic_w"); }
    static FeatureMap history_summary() { return FeatureMap(FeatureKind::history_summary, "history_summary"); }
    static FeatureMap custom(std::string name);
    /// Accepts the names above; anything else is looked up in the custom registry.
    static FeatureMap parse(std::string_view name);

    [[nodiscard]] FeatureKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] std::size_t output_dim(std::size_t x_dim, std::size_t v_dim) const;
    void apply(std::span<const double> x, std::span<const double> v, std::span<double> out) const;

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    FeatureMap(FeatureKind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

    FeatureKind kind_ = FeatureKind::linear;
    std::string name_ = "linear";
};

void register_feature_map(const std::string& name, CustomFeatureMap map);

struct LogisticOptions {
    int max_iter = 100;
    double tol = 1e-8;  // on the max-norm of the mean-scaled gradient
    double ridge = 1e-8;
};

struct RegressionResult {
    Eigen::VectorXd coefficients;  // intercept first
    bool converged = true;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool ridge_jitter = false;  // OLS fell back to 1e-8 ridge on a rank-deficient design
};

/// Ridge-penalized logistic regression by IRLS (Newton) with step halving.
/// `features` excludes the intercept column. The objective is the
/// mean log-likelihood minus ridge/2 * |slopes|^2 (intercept unpenalized).
/// Non-convergence is reported through `converged`, never by non-finite output.
[[nodiscard]] RegressionResult fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                                            const LogisticOptions& options = {});

/// Ridge-penalized least squares with an unpenalized intercept.
[[nodiscard]] RegressionResult fit_ols(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                       double ridge = 0.0);

enum class Link { logit, identity };

struct GlmFit {
    Eigen::VectorXd coefficients;  // intercept first
    Link link = Link::identity;
    FeatureMap feature_map;
    std::vector<std::size_t> training_cluster_ids;
    bool converged = true;

    /// Linear predictor (before the inverse link) at (x, v).
    [[nodiscard]] double linear_predictor(std::span<const double> x, std::span<const double> v) const;
};

struct NuisanceMaps {
    FeatureMap propensity = FeatureMap::linear();
    FeatureMap outcome = FeatureMap::linear();
};

inline constexpr double kDefaultClipEpsilon = 0.01;

struct NuisanceFit {
    GlmFit propensity;
    GlmFit outcome;
    double clip_epsilon = kDefaultClipEpsilon;
};

struct Prediction {
    double pi_hat = 0.5;
    double mu_hat = 0.0;
};

/// Per-individual nuisance predictions in dataset (cluster-major) order.
struct NuisancePredictions {
    std::vector<double> pi_hat;
    std::vector<double> mu_hat;

    [[nodiscard]] std::size_t size() const noexcept { return pi_hat.size(); }
};

[[nodiscard]] double clip_propensity(double pi, double epsilon) noexcept;

/// Propensity on all individuals of the training clusters (label r) and
/// outcome regression on their observed individuals only (target y).
[[nodiscard]] NuisanceFit fit_nuisances(const ClusteredDataset& dataset,
                                        std::span<const std::size_t> training_clusters, const NuisanceMaps& maps,
                                        double clip_epsilon = kDefaultClipEpsilon,
                                        const LogisticOptions& logistic = {});

[[nodiscard]] Prediction predict(const NuisanceFit& fit, std::span<const double> x, std::span<const double> v);

/// Oracle nuisance functions supplied directly instead of fitted.
struct KnownNuisance {
    std::function<double(std::span<const double> x, std::span<const double> w)> pi;
    std::function<double(std::span<const double> x, std::span<const double> w)> mu;
};

[[nodiscard]] NuisancePredictions predict_known(const ClusteredDataset& dataset, const KnownNuisance& known,
                                                double clip_epsilon = kDefaultClipEpsilon);

struct CrossFitOptions {
    int folds = 2;
    NuisanceMaps maps;
    double clip_epsilon = kDefaultClipEpsilon;
    std::uint64_t seed = 0;
    LogisticOptions logistic;
};

struct CrossFitResult {
    NuisancePredictions predictions;
    std::vector<int> fold_of_cluster;
    std::vector<NuisanceFit> fits;  // fits[k] was trained on every fold but k
};

/// Assigns clusters to folds (a seeded permutation dealt round-robin) and
/// predicts every individual from the fit trained on the other folds.
[[nodiscard]] CrossFitResult cross_fit(const ClusteredDataset& dataset, const CrossFitOptions& options);

[[nodiscard]] std::vector<int> assign_folds(std::size_t num_clusters, int folds, std::uint64_t seed);

}  // namespace clusterdr
