// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "clusterdr/errors.hpp"
#include "clusterdr/estimators.hpp"
#include "clusterdr/io.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/rng.hpp"
#include "clusterdr/simulation.hpp"
#include "clusterdr/variance.hpp"

using namespace clusterdr;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what)
    {
        if (!detail.empty())
            detail += "; ";
        detail += (ok ? "" : "FAILED ") + what;
        pass = pass && ok;
    }
};

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

constexpr std::uint64_t kSeed = 20240501;

// Reports produced for the Monte Carlo criteria, re-run at 8 threads later.
struct RecordedRun {
    std::string name;
    std::function<std::string(unsigned)> run;
    std::string single_thread;
};
std::vector<RecordedRun> recorded;

std::string record(const std::string& name, std::function<std::string(unsigned)> run)
{
    std::string text = run(1);
    recorded.push_back({name, std::move(run), text});
    return text;
}

MonteCarloReport misspec(std::size_t n, std::size_t n_g, const std::string& tag)
{
    MisspecOptions options;
    options.n = n;
    options.n_g = n_g;
    options.replications = 200;
    options.seed = kSeed;
    auto report = std::make_shared<MonteCarloReport>();
    record(tag, [options, report](unsigned threads) mutable {
        options.threads = threads;
        auto r = run_misspec_experiment(QuadraticDgp{}, options);
        if (threads == 1)
            *report = r;
        return to_json(r).dump();
    });
    return *report;
}

double mse(const MonteCarloReport& r, const std::string& label) { return find_arm(r, label).value; }

Outcome criterion1()
{
    Outcome o;
    const auto r = misspec(10000, 100, "misspec n=10000 n_g=100");
    const double dr = mse(r, "mu_correct/pi_correct/dr");
    const double dr_pw = mse(r, "mu_correct/pi_wrong/dr");
    const double plug = mse(r, "mu_wrong/pi_correct/plugin");
    const double ipw = mse(r, "mu_correct/pi_wrong/ipw");
    o.check(dr >= 0.03 && dr <= 0.09, "MSE(DR both correct)=" + fmt(dr) + " in [0.03,0.09]");
    o.check(std::fabs(dr_pw - dr) <= 0.25 * dr, "MSE(DR pi wrong)=" + fmt(dr_pw) + " within 25%");
    o.check(plug >= 1.6 && plug <= 2.6, "MSE(plugin mu wrong)=" + fmt(plug) + " in [1.6,2.6]");
    o.check(ipw >= 2.0 && ipw <= 3.5, "MSE(IPW pi wrong)=" + fmt(ipw) + " in [2.0,3.5]");
    return o;
}

Outcome criterion2()
{
    Outcome o;
    const std::pair<std::size_t, std::size_t> designs[] = {{10000, 10}, {1000, 31}};
    for (const auto& [n, n_g] : designs) {
        const std::string tag = "n=" + std::to_string(n) + ",n_g=" + std::to_string(n_g);
        const auto r = misspec(n, n_g, "misspec " + tag);
        const double plug_ratio = mse(r, "mu_wrong/pi_correct/plugin") / mse(r, "mu_wrong/pi_correct/dr");
        const double ipw_ratio = mse(r, "mu_correct/pi_wrong/ipw") / mse(r, "mu_correct/pi_wrong/dr");
        o.check(plug_ratio >= 10.0, tag + " plugin/DR (mu wrong)=" + fmt(plug_ratio) + " >= 10");
        o.check(ipw_ratio >= 10.0, tag + " IPW/DR (pi wrong)=" + fmt(ipw_ratio) + " >= 10");
        const double both[] = {mse(r, "mu_wrong/pi_wrong/plugin"), mse(r, "mu_wrong/pi_wrong/ipw"),
                               mse(r, "mu_wrong/pi_wrong/dr")};
        o.check(both[0] > 1.0 && both[1] > 1.0 && both[2] > 1.0,
                tag + " both-wrong MSEs (" + fmt(both[0]) + "," + fmt(both[1]) + "," + fmt(both[2]) + ") > 1");
    }
    return o;
}

Outcome criterion3()
{
    Outcome o;
    CoverageOptions options;
    options.n = 10000;
    options.alphas = {0.2, 0.4};
    options.replications = 300;
    options.level = 0.95;
    options.seed = kSeed;
    auto slot = std::make_shared<MonteCarloReport>();
    record("coverage", [options, slot](unsigned threads) mutable {
        options.threads = threads;
        auto rep = run_coverage_experiment(HomogeneousDgp{}, options);
        if (threads == 1)
            *slot = rep;
        return to_json(rep).dump();
    });
    const MonteCarloReport& r = *slot;
    for (const char* alpha : {"0.2", "0.4"}) {
        const double c = find_arm(r, std::string("alpha=") + alpha + "/cluster_robust").value;
        o.check(c >= 0.92 && c <= 0.97, std::string("cluster-robust coverage at alpha=") + alpha + " =" + fmt(c) +
                                            " in [0.92,0.97]");
    }
    const double iid = find_arm(r, "alpha=0.4/iid").value;
    o.check(iid <= 0.90, "iid coverage at alpha=0.4 =" + fmt(iid) + " <= 0.90");
    return o;
}

Outcome criterion4()
{
    Outcome o;
    RmseOptions options;
    options.n_grid = {4000, 8000};
    options.replications = 200;
    options.seed = kSeed;
    auto slot = std::make_shared<MonteCarloReport>();
    record("rmse", [options, slot](unsigned threads) mutable {
        options.threads = threads;
        auto rep = run_rmse_experiment(SequentialDgp{}, options);
        if (threads == 1)
            *slot = rep;
        return to_json(rep).dump();
    });
    const MonteCarloReport& r = *slot;
    for (const char* n : {"4000", "8000"}) {
        const std::string p = std::string("n=") + n + "/";
        const double hs = find_arm(r, p + "history_summary").value;
        const double co = find_arm(r, p + "current_only").value;
        const double un = find_arm(r, p + "unadjusted").value;
        o.check(hs < co && hs < un,
                p + " RMSE history=" + fmt(hs) + " < current=" + fmt(co) + ", unadjusted=" + fmt(un));
    }
    const double a = find_arm(r, "n=4000/history_summary").value;
    const double b = find_arm(r, "n=8000/history_summary").value;
    o.check(b < a, "history RMSE decreasing in n (" + fmt(a) + " -> " + fmt(b) + ")");
    return o;
}

Outcome criterion5()
{
    Outcome o;
    HomogeneousDgp dgp;
    dgp.alpha = 0.3;
    const std::size_t n = 10000;
    auto hat_slot = std::make_shared<OmegaMonteCarlo>();
    auto brute_slot = std::make_shared<OmegaMonteCarlo>();
    record("omega_hat replications", [=](unsigned threads) {
        auto h = mean_omega_hat(dgp, n, 300, derive_seed(kSeed, 5), threads);
        if (threads == 1)
            *hat_slot = h;
        return format_double(h.omega) + "," + format_double(h.omega_se);
    });
    record("brute-force omega", [=](unsigned threads) {
        auto b = brute_force_omega(dgp, n, 2000, derive_seed(kSeed, 6), threads);
        if (threads == 1)
            *brute_slot = b;
        return format_double(b.omega);
    });
    const OmegaMonteCarlo& hat = *hat_slot;
    const OmegaMonteCarlo& brute = *brute_slot;
    const double ratio = hat.omega / brute.omega;
    o.check(ratio >= 0.9 && ratio <= 1.1, "mean(omega_hat)=" + fmt(hat.omega) + " / brute force " + fmt(brute.omega) +
                                              " = " + fmt(ratio) + " in [0.9,1.1]");
    return o;
}

Outcome criterion6()
{
    Outcome o;
    auto diag = [](DependenceKind kind) {
        OmegaDiagnosticOptions options;
        options.kind = kind;
        options.alpha = 0.5;
        options.seed = kSeed;
        auto report = std::make_shared<OmegaDiagnosticReport>();
        record("omega-diag " + std::string(to_string(kind)), [options, report](unsigned threads) mutable {
            options.threads = threads;
            auto r = omega_scaling_diagnostic(options);
            if (threads == 1)
                *report = r;
            return to_json(r).dump();
        });
        return *report;
    };
    const auto iid = diag(DependenceKind::iid_within);
    o.check(std::fabs(iid.slope) <= 0.05, "iid_within slope=" + fmt(iid.slope));
    const auto perfect = diag(DependenceKind::perfect_correlation);
    o.check(std::fabs(perfect.slope - 0.5) <= 0.05, "perfect_correlation slope=" + fmt(perfect.slope));
    const auto hetero = diag(DependenceKind::heterogeneous);
    o.check(std::fabs(hetero.slope - 0.5) <= 0.05, "heterogeneous slope=" + fmt(hetero.slope));
    const auto gap = diag(DependenceKind::inverse_gap);
    o.check(gap.log_n_correlation > 0.98, "inverse_gap corr(omega, log n)=" + fmt(gap.log_n_correlation));
    return o;
}

ClusteredDataset tiny_dataset(const std::vector<std::vector<double>>& ys)
{
    std::vector<Cluster> clusters;
    for (std::size_t g = 0; g < ys.size(); ++g) {
        Cluster c;
        c.id = "c" + std::to_string(g);
        c.x = {static_cast<double>(g)};
        for (std::size_t t = 0; t < ys[g].size(); ++t)
            c.members.push_back(IndividualRecord{{0.25 * static_cast<double>(t)}, 1, ys[g][t], t});
        clusters.push_back(std::move(c));
    }
    return ClusteredDataset(std::move(clusters));
}

Outcome criterion7()
{
    Outcome o;
    {
        const auto data = tiny_dataset({{1.5, 2.25, -3.0}, {7.0}, {0.125, 4.0}});
        const KnownNuisance known{[](auto, auto) { return 1.0; }, [](auto, auto) { return 0.0; }};
        const auto dr = estimate_dr(data, predict_known(data, known));
        const double mean = (1.5 + 2.25 - 3.0 + 7.0 + 0.125 + 4.0) / 6.0;
        o.check(std::fabs(dr.theta_hat - mean) <= 1e-15, "DR equals sample mean when fully observed, pi=1");
    }
    {
        const std::vector<double> phi{0.3, -1.2, 2.5, 0.7, 4.1};
        std::vector<std::vector<double>> singles;
        for (const double v : phi)
            singles.push_back({v});
        const auto panel = InfluencePanel::from_clusters(singles);
        const double theta = compensated_mean(phi);
        const double cr = var_cluster_robust(panel, theta).estimate_variance;
        const double iid = var_iid(panel, theta).estimate_variance;
        o.check(std::fabs(cr - 0.8 * iid) <= 1e-14 * iid, "size-1 reduction");
    }
    {
        const auto panel = InfluencePanel::from_clusters({{0.0, 0.0}, {3.0}});
        const auto v = var_cluster_robust(panel, 1.0);
        o.check(std::fabs(*v.omega_hat - 4.0 / 3.0) <= 1e-14 && std::fabs(v.estimate_variance - 4.0 / 9.0) <= 1e-14,
                "hand example omega_hat=" + fmt(*v.omega_hat));
    }
    {
        const auto panel = InfluencePanel::from_clusters({{2.5, 2.5, 2.5}, {2.5}, {2.5, 2.5}});
        const auto v = var_cluster_robust(panel, 2.5);
        o.check(v.omega_hat == 0.0 && v.degenerate_flag, "constant panel omega_hat=0 and flagged");
    }
    {
        const auto ci = wald_ci(0.0, 1.0, 0.95);
        o.check(ci && std::fabs(ci->upper - 1.95996) <= 1e-5 && std::fabs(ci->lower + 1.95996) <= 1e-5,
                "Wald 0.95 quantile=" + (ci ? format_double(ci->upper) : std::string("none")));
    }
    {
        const std::string text =
            "cluster_id,time_index,x_0,w_0,r,y\n"
            "a,0,1.5,0.1,1,2.75\n"
            "a,1,1.5,-0.30000000000000004,0,\n"
            "\"b,2\",0,-2,1e-300,1,-0.5\n";
        std::istringstream in(text);
        std::ostringstream out;
        write_dataset_csv(out, read_dataset_csv(in));
        o.check(out.str() == text, "ingest/emit round trip is byte-identical");
    }
    return o;
}

double cluster_robust_se(const SimulatedData& sim, double& mean)
{
    const auto panel = InfluencePanel::shaped_like(sim.dataset, sim.full_outcomes);
    mean = compensated_mean(sim.full_outcomes);
    return std::sqrt(var_cluster_robust(panel, mean).estimate_variance);
}

Outcome criterion8()
{
    Outcome o;
    const std::size_t n = 1000000;
    auto check = [&](const SimulatedData& sim, const std::string& name) {
        double mean = 0.0;
        const double se = cluster_robust_se(sim, mean);
        const double z = (mean - sim.truth) / se;
        o.check(std::fabs(z) <= 3.0,
                name + " mean=" + fmt(mean) + " truth=" + fmt(sim.truth) + " z=" + fmt(z));
    };
    check(gen_homogeneous(HomogeneousDgp{}, n, derive_seed(kSeed, 8), 0), "homogeneous");
    check(gen_sequential(SequentialDgp{}, n, derive_seed(kSeed, 8), 1), "sequential");
    check(gen_quadratic(QuadraticDgp{}, n, 100, derive_seed(kSeed, 8), 2), "quadratic");
    return o;
}

Outcome criterion9()
{
    Outcome o;
    for (const auto& run : recorded) {
        const std::string eight = run.run(8);
        o.check(eight == run.single_thread, run.name);
    }
    if (recorded.empty())
        o.check(false, "no Monte Carlo runs recorded");
    return o;
}

}  // namespace

int main()
{
    using Clock = std::chrono::steady_clock;
    const std::pair<const char*, Outcome (*)()> criteria[] = {
        {"1 misspecification MSE (n_g=100)", criterion1},
        {"2 misspecification orderings", criterion2},
        {"3 coverage", criterion3},
        {"4 RMSE ordering", criterion4},
        {"5 omega_hat consistency", criterion5},
        {"6 omega scaling slopes", criterion6},
        {"7 exact identities", criterion7},
        {"8 ground-truth oracles", criterion8},
        {"9 determinism across thread counts", criterion9},
    };
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        const auto start = Clock::now();
        Outcome outcome;
        try {
            outcome = fn();
        } catch (const std::exception& e) {
            outcome.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(Clock::now() - start).count();
        std::printf("criterion %s: %s (%.1fs) %s\n", name, outcome.pass ? "PASS" : "FAIL", secs,
                    outcome.detail.c_str());
        std::fflush(stdout);
        failures += outcome.pass ? 0 : 1;
    }
    std::printf("%d of 9 criteria passed\n", 9 - failures);
    return failures == 0 ? 0 : 1;
}
