#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>

#include "clusterdr/errors.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/parallel.hpp"
#include "clusterdr/rng.hpp"
#include "clusterdr/simulation.hpp"
#include "clusterdr/variance.hpp"

namespace clusterdr {

std::string_view to_string(DependenceKind kind) noexcept
{
    switch (kind) {
    case DependenceKind::iid_within: return "iid_within";
    case DependenceKind::perfect_correlation: return "perfect_correlation";
    case DependenceKind::inverse_gap: return "inverse_gap";
    case DependenceKind::heterogeneous: return "heterogeneous";
    }
    return "?";
}

DependenceKind parse_dependence_kind(std::string_view name)
{
    for (auto kind : {DependenceKind::iid_within, DependenceKind::perfect_correlation, DependenceKind::inverse_gap,
                      DependenceKind::heterogeneous})
        if (to_string(kind) == name)
            return kind;
    throw ValidationError("unknown dependence kind '" + std::string(name) + "'");
}

namespace {

// Factor L with L L^T equal to the PSD projection (negative eigenvalues set
// to zero) of Sigma_ts = 1 for t = s, 1/|t - s| otherwise.
struct InverseGapFactor {
    Eigen::MatrixXd factor;
    double sum_of_entries = 0.0;  // 1^T (L L^T) 1
    bool projected = false;
};

InverseGapFactor inverse_gap_factor(std::size_t size)
{
    const auto m = static_cast<Eigen::Index>(size);
    Eigen::MatrixXd cov(m, m);
    for (Eigen::Index t = 0; t < m; ++t)
        for (Eigen::Index s = 0; s < m; ++s)
            cov(t, s) = t == s ? 1.0 : 1.0 / static_cast<double>(std::abs(t - s));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Eigen::VectorXd values = eig.eigenvalues();
    InverseGapFactor out;
    for (Eigen::Index k = 0; k < m; ++k) {
        if (values[k] < 0.0) {
            out.projected = out.projected || values[k] < -1e-12;
            values[k] = 0.0;
        }
    }
    out.factor = eig.eigenvectors() * values.cwiseSqrt().asDiagonal();
    const Eigen::VectorXd column_sums = out.factor.transpose() * Eigen::VectorXd::Ones(m);
    out.sum_of_entries = column_sums.squaredNorm();
    return out;
}

std::vector<std::size_t> heterogeneous_sizes(std::size_t n, double alpha)
{
    // About n/2 singletons and n^(1-alpha)/2 clusters of size floor(n^alpha).
    const std::size_t big = power_law_cluster_sizes(n, alpha).front();
    const std::size_t num_big = std::max<std::size_t>(1, (n / 2) / big);
    if (num_big * big >= n)
        throw ValidationError("heterogeneous diagnostic: n too small for alpha");
    std::vector<std::size_t> sizes(n - num_big * big, 1);
    sizes.insert(sizes.end(), num_big, big);
    return sizes;
}

struct Regression {
    double slope = 0.0;
    double slope_se = 0.0;
};

Regression simple_regression(const std::vector<double>& x, const std::vector<double>& y)
{
    const double k = static_cast<double>(x.size());
    const double mx = compensated_mean(x);
    const double my = compensated_mean(y);
    KahanSum sxx, sxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx.add((x[i] - mx) * (x[i] - mx));
        sxy.add((x[i] - mx) * (y[i] - my));
    }
    Regression out;
    out.slope = sxy.value() / sxx.value();
    const double intercept = my - out.slope * mx;
    KahanSum rss;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - intercept - out.slope * x[i];
        rss.add(r * r);
    }
    out.slope_se = x.size() > 2 ? std::sqrt(rss.value() / (k - 2.0) / sxx.value()) : 0.0;
    return out;
}

double correlation(const std::vector<double>& x, const std::vector<double>& y)
{
    const double mx = compensated_mean(x);
    const double my = compensated_mean(y);
    KahanSum sxx, syy, sxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx.add((x[i] - mx) * (x[i] - mx));
        syy.add((y[i] - my) * (y[i] - my));
        sxy.add((x[i] - mx) * (y[i] - my));
    }
    return sxy.value() / std::sqrt(sxx.value() * syy.value());
}

}  // namespace

OmegaDiagnosticReport omega_scaling_diagnostic(const OmegaDiagnosticOptions& options)
{
    const auto& grid = options.n_grid;
    if (grid.size() < 3)
        throw ValidationError("omega diagnostic: n_grid needs at least 3 points");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1])
            throw ValidationError("omega diagnostic: n_grid must be strictly increasing");
    if (options.reps < 2)
        throw ValidationError("omega diagnostic: need at least 2 reps");
    if (options.kind == DependenceKind::inverse_gap && grid.front() < 3)
        throw ValidationError("omega diagnostic: grid too small");

    OmegaDiagnosticReport report;
    report.kind = options.kind;
    report.alpha = options.alpha;
    report.reps = options.reps;
    report.seed = options.seed;
    report.regressor = options.kind == DependenceKind::inverse_gap ? "log_log_n" : "log_n";

    for (std::size_t k = 0; k < grid.size(); ++k) {
        const std::size_t n = grid[k];
        const auto sizes = options.kind == DependenceKind::heterogeneous ? heterogeneous_sizes(n, options.alpha)
                                                                         : power_law_cluster_sizes(n, options.alpha);

        std::map<std::size_t, InverseGapFactor> factors;
        OmegaPoint point;
        point.n = n;
        point.num_clusters = sizes.size();
        KahanSum reference;
        for (const std::size_t s : sizes) {
            const double size = static_cast<double>(s);
            switch (options.kind) {
            case DependenceKind::iid_within:
                reference.add(size);
                break;
            case DependenceKind::perfect_correlation:
            case DependenceKind::heterogeneous:
                reference.add(size * size);
                break;
            case DependenceKind::inverse_gap: {
                auto it = factors.find(s);
                if (it == factors.end())
                    it = factors.emplace(s, inverse_gap_factor(s)).first;
                report.covariance_projected = report.covariance_projected || it->second.projected;
                reference.add(it->second.sum_of_entries);
                break;
            }
            }
        }
        point.reference = reference.value() / static_cast<double>(n);

        // Each rep draws a mean-zero panel and records (1/n) sum_g S_g^2,
        // an unbiased estimate of Omega_n.
        std::vector<double> estimates(options.reps);
        const std::uint64_t grid_seed = derive_seed(options.seed, k);
        parallel_for(options.reps, options.threads, [&](std::size_t rep) {
            RandomStream stream(grid_seed, rep, StreamRole::panel);
            KahanSum total;
            Eigen::VectorXd z;
            for (const std::size_t s : sizes) {
                double cluster_sum = 0.0;
                switch (options.kind) {
                case DependenceKind::iid_within: {
                    KahanSum acc;
                    for (std::size_t i = 0; i < s; ++i)
                        acc.add(stream.normal());
                    cluster_sum = acc.value();
                    break;
                }
                case DependenceKind::perfect_correlation:
                case DependenceKind::heterogeneous:
                    cluster_sum = static_cast<double>(s) * stream.normal();
                    break;
                case DependenceKind::inverse_gap: {
                    const Eigen::MatrixXd& factor = factors.at(s).factor;
                    z.resize(static_cast<Eigen::Index>(s));
                    for (Eigen::Index i = 0; i < z.size(); ++i)
                        z[i] = stream.normal();
                    const Eigen::VectorXd phi = factor * z;
                    cluster_sum = phi.sum();
                    break;
                }
                }
                total.add(cluster_sum * cluster_sum);
            }
            estimates[rep] = total.value() / static_cast<double>(n);
        });

        point.omega = compensated_mean(estimates);
        KahanSum spread;
        for (const double e : estimates)
            spread.add((e - point.omega) * (e - point.omega));
        point.omega_se = std::sqrt(spread.value() / static_cast<double>(options.reps - 1) /
                                   static_cast<double>(options.reps));
        report.points.push_back(point);
    }

    std::vector<double> xs, ys, omegas, log_ns;
    for (const auto& p : report.points) {
        const double log_n = std::log(static_cast<double>(p.n));
        xs.push_back(options.kind == DependenceKind::inverse_gap ? std::log(log_n) : log_n);
        ys.push_back(std::log(p.omega));
        omegas.push_back(p.omega);
        log_ns.push_back(log_n);
    }
    const Regression fit = simple_regression(xs, ys);
    report.slope = fit.slope;
    report.slope_se = fit.slope_se;
    report.log_n_correlation = correlation(omegas, log_ns);
    return report;
}

OmegaMonteCarlo brute_force_omega(const HomogeneousDgp& spec, std::size_t n, std::size_t datasets,
                                  std::uint64_t seed, unsigned threads, double clip_epsilon)
{
    if (datasets < 2)
        throw ValidationError("brute_force_omega: need at least 2 datasets");
    const auto sizes = power_law_cluster_sizes(n, spec.alpha);
    const std::size_t G = sizes.size();
    const KnownNuisance oracle = spec.oracle();

    std::vector<std::vector<double>> sums(datasets);
    std::vector<double> thetas(datasets);
    parallel_for(datasets, threads, [&](std::size_t d) {
        const SimulatedData data = gen_homogeneous(spec, n, seed, d);
        const InfluencePanel panel = influence_values(data.dataset, predict_known(data.dataset, oracle, clip_epsilon));
        sums[d].resize(G);
        for (std::size_t g = 0; g < G; ++g)
            sums[d][g] = panel.cluster_sum(g);
        thetas[d] = compensated_mean(panel.values());
    });

    KahanSum omega;
    for (std::size_t g = 0; g < G; ++g) {
        KahanSum mean_acc;
        for (std::size_t d = 0; d < datasets; ++d)
            mean_acc.add(sums[d][g]);
        const double mean = mean_acc.value() / static_cast<double>(datasets);
        KahanSum var_acc;
        for (std::size_t d = 0; d < datasets; ++d)
            var_acc.add((sums[d][g] - mean) * (sums[d][g] - mean));
        omega.add(var_acc.value() / static_cast<double>(datasets - 1));
    }
    return OmegaMonteCarlo{omega.value() / static_cast<double>(n), 0.0, compensated_mean(thetas), datasets};
}

OmegaMonteCarlo mean_omega_hat(const HomogeneousDgp& spec, std::size_t n, std::size_t datasets, std::uint64_t seed,
                               unsigned threads, double clip_epsilon)
{
    if (datasets < 2)
        throw ValidationError("mean_omega_hat: need at least 2 datasets");
    const KnownNuisance oracle = spec.oracle();
    std::vector<double> omegas(datasets);
    std::vector<double> thetas(datasets);
    parallel_for(datasets, threads, [&](std::size_t d) {
        const SimulatedData data = gen_homogeneous(spec, n, seed, d);
        const InfluencePanel panel = influence_values(data.dataset, predict_known(data.dataset, oracle, clip_epsilon));
        thetas[d] = compensated_mean(panel.values());
        omegas[d] = var_cluster_robust(panel, thetas[d]).omega_hat.value();
    });
    const double mean = compensated_mean(omegas);
    KahanSum ss;
    for (const double w : omegas)
        ss.add((w - mean) * (w - mean));
    const double se = std::sqrt(ss.value() / static_cast<double>(datasets - 1) / static_cast<double>(datasets));
    return OmegaMonteCarlo{mean, se, compensated_mean(thetas), datasets};
}

}  // namespace clusterdr
