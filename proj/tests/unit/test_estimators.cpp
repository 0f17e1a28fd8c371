#include <doctest.h>

#include <cmath>
#include <vector>

#include "clusterdr/errors.hpp"
#include "clusterdr/estimators.hpp"
#include "clusterdr/rng.hpp"
#include "clusterdr/simulation.hpp"

using namespace clusterdr;

namespace {

// One singleton cluster per (r, y) pair, with w = 0.
ClusteredDataset singletons(const std::vector<std::pair<bool, double>>& rows)
{
    std::vector<Cluster> clusters;
    for (const auto& [r, y] : rows) {
        Cluster c;
        c.id = std::to_string(clusters.size());
        c.members.push_back(IndividualRecord{{0.0}, r, r ? std::optional<double>(y) : std::nullopt, 0});
        clusters.push_back(std::move(c));
    }
    return ClusteredDataset(std::move(clusters));
}

NuisancePredictions preds(std::vector<double> pi, std::vector<double> mu)
{
    return NuisancePredictions{std::move(pi), std::move(mu)};
}

Cluster path(const std::vector<std::vector<double>>& ws)
{
    Cluster c;
    c.id = "p";
    for (std::size_t t = 0; t < ws.size(); ++t)
        c.members.push_back(IndividualRecord{ws[t], t % 2 == 0, t % 2 == 0 ? std::optional<double>(t + 1.0) : std::nullopt, t});
    return c;
}

}  // namespace

TEST_CASE("influence values")
{
    const auto data = singletons({{true, 2.0}, {false, 0.0}, {true, 5.5}});
    const auto panel = influence_values(data, preds({0.5, 0.3, 1.0}, {1.0, 4.0, -17.25}));
    CHECK(panel.values()[0] == 3.0);
    CHECK(panel.values()[1] == 4.0);
    CHECK(panel.values()[2] == 5.5);
    CHECK(panel.aligned_with(data));
    CHECK_THROWS_AS((void)influence_values(data, preds({0.5, 0.0, 1.0}, {1, 1, 1})), ValidationError);
    CHECK_THROWS_AS((void)influence_values(data, preds({0.5}, {1.0})), ValidationError);
}

TEST_CASE("plug-in estimator")
{
    const auto data = singletons({{true, 9.0}, {false, 0.0}, {true, -4.0}});
    CHECK(estimate_plugin(data, preds({1, 1, 1}, {2.5, 2.5, 2.5})).theta_hat == 2.5);
    CHECK(estimate_plugin(data, preds({1, 1, 1}, {1, 2, 3})).theta_hat == 2.0);
}

TEST_CASE("IPW estimator")
{
    const auto full = singletons({{true, 1.0}, {true, 2.0}, {true, 6.0}});
    CHECK(estimate_ipw(full, preds({1, 1, 1}, {0, 0, 0})).theta_hat == 3.0);
    const auto half = singletons({{true, 2.0}, {false, 0.0}});
    CHECK(estimate_ipw(half, preds({0.5, 0.7}, {0, 0})).theta_hat == 2.0);
}

TEST_CASE("DR estimator")
{
    const auto full = singletons({{true, 1.0}, {true, 2.0}, {true, 3.0}});
    const auto report = estimate_dr(full, preds({1, 1, 1}, {0, 0, 0}));
    CHECK(report.theta_hat == 2.0);
    CHECK(report.n == 3);
    CHECK(report.G == 3);
    CHECK(report.estimator == EstimatorKind::dr);

    const auto two = singletons({{true, 2.0}, {false, 0.0}});
    CHECK(estimate_dr(two, preds({0.5, 0.2}, {1.0, 4.0})).theta_hat == 3.5);
}

TEST_CASE("DR is unbiased when either nuisance is right")
{
    // quadratic DGP with oracle functions, one of them replaced by a bad constant
    const QuadraticDgp dgp;
    const auto oracle = dgp.oracle();
    const KnownNuisance bad_mu{oracle.pi, [](auto, auto) { return 0.0; }};
    const KnownNuisance bad_pi{[](auto, auto) { return 0.5; }, oracle.mu};
    double err_mu = 0.0, err_pi = 0.0, err_plugin = 0.0;
    const int reps = 20;
    for (int m = 0; m < reps; ++m) {
        const auto sim = gen_quadratic(dgp, 20000, 10, 77, m);
        err_mu += estimate_dr(sim.dataset, predict_known(sim.dataset, bad_mu)).theta_hat - dgp.theta_true;
        err_pi += estimate_dr(sim.dataset, predict_known(sim.dataset, bad_pi)).theta_hat - dgp.theta_true;
        err_plugin += estimate_plugin(sim.dataset, predict_known(sim.dataset, bad_mu)).theta_hat - dgp.theta_true;
    }
    CHECK(std::fabs(err_mu / reps) < 0.1);
    CHECK(std::fabs(err_pi / reps) < 0.1);
    CHECK(std::fabs(err_plugin / reps) > 4.0);
}

TEST_CASE("history summary")
{
    const auto cfg = SummaryConfig::max_min_mean();
    const auto c = path({{1.0, -1.0}, {0.0, 2.0}, {5.0, 5.0}});
    CHECK(summarize_history(c, 2, cfg) == std::vector<double>{2.0, -1.0, 0.5, 0.5});
    CHECK(summarize_history(c, 1, cfg) == std::vector<double>{1.0, -1.0, 1.0, -1.0});

    auto changed = path({{1.0, -1.0}, {0.0, 2.0}, {-9.0, 40.0}});
    CHECK(summarize_history(changed, 2, cfg) == summarize_history(c, 2, cfg));
    CHECK(summarize_history(changed, 3, cfg) != summarize_history(c, 3, cfg));

    CHECK_THROWS_AS((void)summarize_history(c, 0, cfg), ValidationError);
    CHECK_THROWS_AS((void)summarize_history(c, 4, cfg), ValidationError);
    CHECK_THROWS_AS((void)summarize_history(c, 1, SummaryConfig{}), ValidationError);
    CHECK(cfg.output_dim(2) == 4);
}

TEST_CASE("history summary window and past outcomes")
{
    SummaryConfig cfg;
    cfg.last_d_window = true;
    cfg.window_d = 2;
    cfg.include_past_ry = true;
    const auto c = path({{1.0}, {2.0}, {3.0}});
    // t = 1: window (W1, 0 pad), no past
    CHECK(summarize_history(c, 1, cfg) == std::vector<double>{1.0, 0.0, 0.0, 0.0});
    // t = 2: window (W2, W1), past R = {1} and RY = {1}
    CHECK(summarize_history(c, 2, cfg) == std::vector<double>{2.0, 1.0, 1.0, 1.0});
    // t = 3: past R = {1, 0}, RY = {1, 0}
    CHECK(summarize_history(c, 3, cfg) == std::vector<double>{3.0, 2.0, 0.5, 0.5});

    // the outcome at t itself never enters S_t
    auto c2 = c;
    c2.members[2].y = 999.0;
    CHECK(summarize_history(c2, 3, cfg) == summarize_history(c, 3, cfg));
    CHECK(cfg.output_dim(1) == 4);
}

TEST_CASE("sequential estimator with the current W reduces to the plain DR estimator")
{
    const auto sim = gen_homogeneous(HomogeneousDgp{}, 3000, 4);
    CrossFitOptions options;
    options.seed = 99;
    const auto seq = estimate_dr_sequential(sim.dataset, SummaryConfig::current_only(), options);
    const auto plain = estimate_dr(sim.dataset, cross_fit(sim.dataset, options).predictions);
    CHECK(seq.report.theta_hat == plain.theta_hat);
    CHECK(seq.report.estimator == EstimatorKind::dr_sequential);
}

TEST_CASE("sequential estimator beats current-only adjustment")
{
    const SequentialDgp dgp;
    CrossFitOptions options;
    double hist = 0.0, current = 0.0;
    for (int m = 0; m < 10; ++m) {
        const auto sim = gen_sequential(dgp, 4000, 3, m);
        options.seed = derive_seed(3, m);
        const double a = estimate_dr_sequential(sim.dataset, SummaryConfig::max_min_mean(), options).report.theta_hat;
        const double b = estimate_dr_sequential(sim.dataset, SummaryConfig::current_only(), options).report.theta_hat;
        hist += (a - sim.truth) * (a - sim.truth);
        current += (b - sim.truth) * (b - sim.truth);
    }
    CHECK(hist < current);
}

TEST_CASE("enum names round trip")
{
    for (auto k : {EstimatorKind::plugin, EstimatorKind::ipw, EstimatorKind::dr, EstimatorKind::dr_sequential})
        CHECK(parse_estimator_kind(to_string(k)) == k);
    for (auto v : {VarianceMethod::none, VarianceMethod::iid, VarianceMethod::cluster_robust,
                   VarianceMethod::cluster_bootstrap})
        CHECK(parse_variance_method(to_string(v)) == v);
    CHECK_THROWS_AS((void)parse_estimator_kind("aipw2"), ValidationError);
}
