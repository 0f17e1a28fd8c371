#include "clusterdr/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <shared_mutex>

#include "clusterdr/errors.hpp"
#include "clusterdr/numeric.hpp"

namespace clusterdr {

namespace {

struct Registry {
    std::shared_mutex mutex;
    std::map<std::string, CustomFeatureMap, std::less<>> maps;
};

Registry& registry()
{
    static Registry instance;
    return instance;
}

const CustomFeatureMap& lookup_custom(const std::string& name)
{
    auto& reg = registry();
    std::shared_lock lock(reg.mutex);
    const auto it = reg.maps.find(name);
    if (it == reg.maps.end())
        throw ValidationError("unknown feature map '" + name + "'");
    return it->second;  // entries are never erased
}

void require_finite(const Eigen::MatrixXd& m, const char* what)
{
    if (!m.allFinite())
        throw ValidationError(std::string(what) + ": non-finite input");
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& features)
{
    Eigen::MatrixXd design(features.rows(), features.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(features.cols()) = features;
    return design;
}

double penalized_loglik(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels, const Eigen::VectorXd& beta,
                        double ridge)
{
    const Eigen::VectorXd eta = design * beta;
    KahanSum acc;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        acc.add(labels[i] * eta[i] - softplus(eta[i]));
    const double n = static_cast<double>(eta.size());
    return acc.value() / n - 0.5 * ridge * beta.tail(beta.size() - 1).squaredNorm();
}

}  // namespace

FeatureMap FeatureMap::custom(std::string name)
{
    (void)lookup_custom(name);
    return FeatureMap(FeatureKind::custom, std::move(name));
}

FeatureMap FeatureMap::parse(std::string_view name)
{
    if (name == "linear")
        return linear();
    if (name == "quadratic_w" || name == "quadratic-in-w" || name == "quadratic")
        return quadratic_w();
    if (name == "history_summary" || name == "history-summary")
        return history_summary();
    return custom(std::string(name));
}

std::size_t FeatureMap::output_dim(std::size_t x_dim, std::size_t v_dim) const
{
    switch (kind_) {
    case FeatureKind::linear:
    case FeatureKind::history_summary:
        return x_dim + v_dim;
    case FeatureKind::quadratic_w:
        return x_dim + 2 * v_dim;
    case FeatureKind::custom:
        return lookup_custom(name_).output_dim(x_dim, v_dim);
    }
    return 0;
}

void FeatureMap::apply(std::span<const double> x, std::span<const double> v, std::span<double> out) const
{
    if (out.size() != output_dim(x.size(), v.size()))
        throw ValidationError("feature map '" + name_ + "': output buffer has wrong dimension");
    switch (kind_) {
    case FeatureKind::linear:
    case FeatureKind::history_summary:
        std::copy(x.begin(), x.end(), out.begin());
        std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(x.size()));
        return;
    case FeatureKind::quadratic_w: {
        auto it = std::copy(x.begin(), x.end(), out.begin());
        it = std::copy(v.begin(), v.end(), it);
        for (const double value : v)
            *it++ = value * value;
        return;
    }
    case FeatureKind::custom:
        lookup_custom(name_).apply(x, v, out);
        return;
    }
}

void register_feature_map(const std::string& name, CustomFeatureMap map)
{
    if (name.empty() || !map.output_dim || !map.apply)
        throw ValidationError("register_feature_map: name and both callbacks are required");
    if (name == "linear" || name == "quadratic_w" || name == "history_summary")
        throw ValidationError("register_feature_map: '" + name + "' is a built-in map");
    auto& reg = registry();
    std::unique_lock lock(reg.mutex);
    if (!reg.maps.emplace(name, std::move(map)).second)
        throw ValidationError("register_feature_map: '" + name + "' already registered");
}

RegressionResult fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                              const LogisticOptions& options)
{
    const Eigen::Index n = features.rows();
    const Eigen::Index p = features.cols() + 1;
    if (labels.size() != n)
        throw ValidationError("fit_logistic: " + std::to_string(n) + " feature rows but " +
                              std::to_string(labels.size()) + " labels");
    require_finite(features, "fit_logistic");
    require_finite(labels, "fit_logistic");
    if (n < p)
        throw EstimationError("fit_logistic: " + std::to_string(n) + " rows cannot identify " +
                              std::to_string(p) + " coefficients");
    bool has_zero = false;
    bool has_one = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (labels[i] != 0.0 && labels[i] != 1.0)
            throw ValidationError("fit_logistic: labels must be 0 or 1");
        (labels[i] == 1.0 ? has_one : has_zero) = true;
    }
    if (!has_zero || !has_one)
        throw EstimationError("fit_logistic: single-class labels");

    const Eigen::MatrixXd design = with_intercept(features);
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, options.ridge);
    penalty[0] = 0.0;

    RegressionResult result;
    result.coefficients = Eigen::VectorXd::Zero(p);
    result.converged = false;
    Eigen::VectorXd& beta = result.coefficients;
    double objective = penalized_loglik(design, labels, beta, options.ridge);

    for (int iter = 0; iter <= options.max_iter; ++iter) {
        const Eigen::VectorXd eta = design * beta;
        Eigen::VectorXd prob(n);
        Eigen::VectorXd weight(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            prob[i] = logistic(eta[i]);
            weight[i] = prob[i] * (1.0 - prob[i]);
        }
        const Eigen::VectorXd gradient =
            inv_n * (design.transpose() * (labels - prob)) - penalty.cwiseProduct(beta);
        result.gradient_norm = gradient.cwiseAbs().maxCoeff();
        result.iterations = iter;
        if (result.gradient_norm <= options.tol) {
            result.converged = true;
            break;
        }
        if (iter == options.max_iter)
            break;

        Eigen::MatrixXd hessian = inv_n * (design.transpose() * weight.asDiagonal() * design);
        hessian.diagonal() += penalty;
        Eigen::LDLT<Eigen::MatrixXd> solver(hessian);
        Eigen::VectorXd step = solver.solve(gradient);
        if (solver.info() != Eigen::Success || !step.allFinite())
            break;

        double scale = 1.0;
        Eigen::VectorXd candidate = beta + step;
        double candidate_objective = penalized_loglik(design, labels, candidate, options.ridge);
        int halvings = 0;
        while (!(candidate_objective >= objective) && halvings < 30) {
            scale *= 0.5;
            candidate = beta + scale * step;
            candidate_objective = penalized_loglik(design, labels, candidate, options.ridge);
            ++halvings;
        }
        if (!candidate.allFinite() || !(candidate_objective >= objective))
            break;
        beta = std::move(candidate);
        objective = candidate_objective;
    }
    return result;
}

RegressionResult fit_ols(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double ridge)
{
    const Eigen::Index n = features.rows();
    if (targets.size() != n)
        throw ValidationError("fit_ols: " + std::to_string(n) + " feature rows but " +
                              std::to_string(targets.size()) + " targets");
    if (n < 1)
        throw ValidationError("fit_ols: no rows");
    if (!(ridge >= 0.0))
        throw ValidationError("fit_ols: ridge must be nonnegative");
    require_finite(features, "fit_ols");
    require_finite(targets, "fit_ols");

    const Eigen::MatrixXd design = with_intercept(features);
    const Eigen::Index p = design.cols();
    RegressionResult result;

    auto solve_penalized = [&](double lambda) {
        Eigen::MatrixXd gram = design.transpose() * design;
        gram.diagonal().tail(p - 1).array() += lambda * static_cast<double>(n);
        return Eigen::VectorXd(gram.ldlt().solve(design.transpose() * targets));
    };

    if (ridge > 0.0) {
        result.coefficients = solve_penalized(ridge);
    } else {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        if (qr.rank() == p) {
            result.coefficients = qr.solve(targets);
        } else {
            result.coefficients = solve_penalized(1e-8);
            result.ridge_jitter = true;
        }
    }
    if (!result.coefficients.allFinite())
        throw EstimationError("fit_ols: solution is not finite");
    return result;
}

double GlmFit::linear_predictor(std::span<const double> x, std::span<const double> v) const
{
    const std::size_t dim = feature_map.output_dim(x.size(), v.size());
    if (static_cast<Eigen::Index>(dim) + 1 != coefficients.size())
        throw ValidationError("predict: input dimensions do not match the fitted feature map");
    double buffer_small[32];
    std::vector<double> buffer_large;
    std::span<double> features;
    if (dim <= 32) {
        features = std::span<double>(buffer_small, dim);
    } else {
        buffer_large.resize(dim);
        features = buffer_large;
    }
    feature_map.apply(x, v, features);
    double eta = coefficients[0];
    for (std::size_t j = 0; j < dim; ++j)
        eta += coefficients[static_cast<Eigen::Index>(j) + 1] * features[j];
    return eta;
}

double clip_propensity(double pi, double epsilon) noexcept
{
    return std::clamp(pi, epsilon, 1.0);
}

namespace {

struct Design {
    Eigen::MatrixXd features;
    Eigen::VectorXd response;
};

template <class Include, class Response>
Design build_design(const ClusteredDataset& dataset, std::span<const std::size_t> clusters, const FeatureMap& map,
                    Include include, Response response)
{
    std::size_t rows = 0;
    for (const std::size_t g : clusters)
        for (const auto& m : dataset.cluster(g).members)
            rows += include(m) ? 1 : 0;

    const std::size_t dim = map.output_dim(dataset.x_dim(), dataset.w_dim());
    Design design{Eigen::MatrixXd(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim)),
                  Eigen::VectorXd(static_cast<Eigen::Index>(rows))};
    std::vector<double> row(dim);
    Eigen::Index r = 0;
    for (const std::size_t g : clusters) {
        const auto& cluster = dataset.cluster(g);
        for (const auto& m : cluster.members) {
            if (!include(m))
                continue;
            map.apply(cluster.x, m.w, row);
            for (std::size_t j = 0; j < dim; ++j)
                design.features(r, static_cast<Eigen::Index>(j)) = row[j];
            design.response[r] = response(m);
            ++r;
        }
    }
    return design;
}

}  // namespace

NuisanceFit fit_nuisances(const ClusteredDataset& dataset, std::span<const std::size_t> training_clusters,
                          const NuisanceMaps& maps, double clip_epsilon, const LogisticOptions& logistic)
{
    validate(dataset);
    if (training_clusters.empty())
        throw ValidationError("fit_nuisances: no training clusters");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5))
        throw ValidationError("fit_nuisances: clip_epsilon must lie in (0, 0.5)");
    for (const std::size_t g : training_clusters)
        if (g >= dataset.num_clusters())
            throw ValidationError("fit_nuisances: cluster index " + std::to_string(g) + " out of range");

    const auto all = [](const IndividualRecord&) { return true; };
    const auto observed = [](const IndividualRecord& m) { return m.r; };

    const Design outcome_design = build_design(dataset, training_clusters, maps.outcome, observed,
                                               [](const IndividualRecord& m) { return *m.y; });
    if (outcome_design.response.size() == 0)
        throw EstimationError("fit_nuisances: no observed outcomes in the training clusters");
    const Design propensity_design = build_design(dataset, training_clusters, maps.propensity, all,
                                                  [](const IndividualRecord& m) { return m.r ? 1.0 : 0.0; });

    NuisanceFit fit;
    fit.clip_epsilon = clip_epsilon;
    const std::vector<std::size_t> ids(training_clusters.begin(), training_clusters.end());

    const RegressionResult pi = fit_logistic(propensity_design.features, propensity_design.response, logistic);
    fit.propensity = GlmFit{pi.coefficients, Link::logit, maps.propensity, ids, pi.converged};

    const RegressionResult mu = fit_ols(outcome_design.features, outcome_design.response, 0.0);
    fit.outcome = GlmFit{mu.coefficients, Link::identity, maps.outcome, ids, !mu.ridge_jitter};
    return fit;
}

Prediction predict(const NuisanceFit& fit, std::span<const double> x, std::span<const double> v)
{
    return Prediction{clip_propensity(logistic(fit.propensity.linear_predictor(x, v)), fit.clip_epsilon),
                      fit.outcome.linear_predictor(x, v)};
}

NuisancePredictions predict_known(const ClusteredDataset& dataset, const KnownNuisance& known, double clip_epsilon)
{
    if (!known.pi || !known.mu)
        throw ValidationError("predict_known: both pi and mu must be supplied");
    NuisancePredictions out;
    out.pi_hat.reserve(dataset.num_individuals());
    out.mu_hat.reserve(dataset.num_individuals());
    for (const auto& c : dataset.clusters()) {
        for (const auto& m : c.members) {
            out.pi_hat.push_back(clip_propensity(known.pi(c.x, m.w), clip_epsilon));
            out.mu_hat.push_back(known.mu(c.x, m.w));
        }
    }
    return out;
}

std::vector<int> assign_folds(std::size_t num_clusters, int folds, std::uint64_t seed)
{
    if (folds < 2)
        throw ValidationError("cross_fit: folds must be at least 2");
    if (num_clusters < static_cast<std::size_t>(folds))
        throw ValidationError("cross_fit: " + std::to_string(num_clusters) + " clusters cannot fill " +
                              std::to_string(folds) + " folds");
    const auto order = permuted_clusters(num_clusters, seed);
    std::vector<int> fold(num_clusters);
    for (std::size_t j = 0; j < order.size(); ++j)
        fold[order[j]] = static_cast<int>(j % static_cast<std::size_t>(folds));
    return fold;
}

CrossFitResult cross_fit(const ClusteredDataset& dataset, const CrossFitOptions& options)
{
    validate(dataset);
    CrossFitResult result;
    result.fold_of_cluster = assign_folds(dataset.num_clusters(), options.folds, options.seed);
    result.predictions.pi_hat.assign(dataset.num_individuals(), 0.0);
    result.predictions.mu_hat.assign(dataset.num_individuals(), 0.0);
    result.fits.reserve(static_cast<std::size_t>(options.folds));

    const auto& offsets = dataset.offsets();
    for (int k = 0; k < options.folds; ++k) {
        std::vector<std::size_t> training;
        for (std::size_t g = 0; g < dataset.num_clusters(); ++g)
            if (result.fold_of_cluster[g] != k)
                training.push_back(g);
        NuisanceFit fit = fit_nuisances(dataset, training, options.maps, options.clip_epsilon, options.logistic);
        for (std::size_t g = 0; g < dataset.num_clusters(); ++g) {
            if (result.fold_of_cluster[g] != k)
                continue;
            const auto& cluster = dataset.cluster(g);
            for (std::size_t i = 0; i < cluster.size(); ++i) {
                const Prediction p = predict(fit, cluster.x, cluster.members[i].w);
                result.predictions.pi_hat[offsets[g] + i] = p.pi_hat;
                result.predictions.mu_hat[offsets[g] + i] = p.mu_hat;
            }
        }
        result.fits.push_back(std::move(fit));
    }
    return result;
}

}  // namespace clusterdr
