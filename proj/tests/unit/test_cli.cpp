#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clusterdr/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args)
{
    args.insert(args.begin(), "clusterdr");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = clusterdr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::path(CLUSTERDR_TEST_TMP) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string write(const fs::path& path, const std::string& text)
{
    std::ofstream(path, std::ios::binary) << text;
    return path.string();
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("known-nuisance estimate on a tiny file")
{
    const auto dir = scratch("tiny");
    const auto data = write(dir / "d.csv",
                            "cluster_id,time_index,w_0,r,y\n"
                            "a,0,0.5,1,1\n"
                            "b,0,1.5,1,3\n"
                            "c,0,2.5,0,\n");
    const auto config = write(dir / "c.json",
                              R"({"estimator":"dr","variance":"cluster_robust",
                                  "nuisance":{"mode":"known","known_pi":1,"known_mu":0}})");
    const auto r = run({"estimate", "--config", config, "--data", data});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["report"]["theta_hat"].get<double>() == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(j["report"]["G"] == 3);
    CHECK(j["warnings"].size() == 1);
    CHECK(j["schema_version"] == 1);
    CHECK(!j["config"].contains("threads"));
}

TEST_CASE("exit codes")
{
    const auto dir = scratch("codes");
    const std::string header = "cluster_id,time_index,x_0,w_0,r,y\n";

    SUBCASE("x varying within a cluster")
    {
        const auto data = write(dir / "bad.csv", header + "user42,0,1,0,1,1\nuser42,1,2,0,1,1\n");
        const auto r = run({"estimate", "--data", data});
        CHECK(r.code == 2);
        CHECK(r.err.find("user42") != std::string::npos);
    }
    SUBCASE("unknown config key")
    {
        const auto data = write(dir / "ok.csv", header + "a,0,1,0,1,1\nb,0,1,0,0,\n");
        const auto config = write(dir / "c.json", R"({"estimatr":"dr"})");
        const auto r = run({"estimate", "--config", config, "--data", data});
        CHECK(r.code == 2);
        CHECK(r.err.find("estimatr") != std::string::npos);
    }
    SUBCASE("malformed config and bad flags")
    {
        const auto config = write(dir / "c.json", "{not json");
        CHECK(run({"simulate", "--config", config}).code == 2);
        CHECK(run({"simulate", "--format", "xml"}).code == 2);
        CHECK(run({}).code == 2);
        CHECK(run({"--help"}).code == 0);
        CHECK(run({"estimate", "--data", (dir / "missing.csv").string()}).code == 2);
        const auto cfg = write(dir / "b.json", R"({"bootstrap":{"replicates":10}})");
        CHECK(run({"bootstrap", "--config", cfg, "--data", (dir / "missing.csv").string()}).code == 2);
    }
    SUBCASE("estimation failure")
    {
        // every outcome observed: the propensity model cannot be fitted
        std::string text = header;
        for (int g = 0; g < 6; ++g)
            for (int t = 0; t < 3; ++t)
                text += "c" + std::to_string(g) + "," + std::to_string(t) + ",0," + std::to_string(t) + ",1,1\n";
        const auto data = write(dir / "full.csv", text);
        const auto r = run({"estimate", "--data", data});
        CHECK(r.code == 3);
    }
    SUBCASE("invariant breach")
    {
        const auto data = write(dir / "huge.csv", header + "a,0,0,0,1,1e308\nb,0,0,0,1,1e308\nc,0,0,0,1,1e308\n");
        const auto config = write(dir / "c.json", R"({"nuisance":{"mode":"known","known_pi":1,"known_mu":0}})");
        const auto r = run({"estimate", "--config", config, "--data", data});
        CHECK(r.code == 4);
    }
}

TEST_CASE("simulate then estimate, byte-identical reruns")
{
    const auto dir = scratch("pipeline");
    const auto sim_cfg = write(dir / "s.json", R"({"dgp":"homogeneous","n":400})");
    REQUIRE(run({"simulate", "--config", sim_cfg, "--seed", "5", "--out", (dir / "sim").string()}).code == 0);
    const auto data = (dir / "sim" / "dataset.csv").string();
    REQUIRE(fs::exists(data));
    const auto truth = json::parse(slurp(dir / "sim" / "report.json"));
    CHECK(truth["truth"] == 0.5);

    const auto cfg = write(dir / "e.json", R"({"estimator":"dr","variance":"cluster_robust","nuisance":{"folds":3}})");
    const auto a = run({"estimate", "--config", cfg, "--data", data, "--threads", "1"});
    const auto b = run({"estimate", "--config", cfg, "--data", data, "--threads", "3"});
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto j = json::parse(a.out);
    CHECK(j["report"]["n"] == 400);
    CHECK(j["variance_report"]["omega_hat"].is_number());

    const auto boot_cfg = write(dir / "b.json", R"({"bootstrap":{"replicates":100,"mode":"refit_nuisances"}})");
    const auto c = run({"bootstrap", "--config", boot_cfg, "--data", data, "--threads", "1"});
    const auto d = run({"bootstrap", "--config", boot_cfg, "--data", data, "--threads", "2"});
    REQUIRE(c.code == 0);
    CHECK(c.out == d.out);
    CHECK(json::parse(c.out)["variance_report"]["percentile_ci"].is_array());

    const auto seq_cfg = write(dir / "q.json", R"({"estimator":"dr_sequential","summary":{"components":["running_max","running_min","running_mean"]}})");
    CHECK(run({"estimate", "--config", seq_cfg, "--data", data}).code == 0);

    // --format csv on simulate writes the dataset itself
    const auto csv = run({"simulate", "--config", sim_cfg, "--seed", "5", "--format", "csv"});
    CHECK(csv.out == slurp(data));
}

TEST_CASE("Monte Carlo commands")
{
    const auto dir = scratch("mc");
    const auto cfg = write(dir / "m.json", R"({"n":2000,"n_g":20,"replications":50})");
    const auto r = run({"mc-misspec", "--config", cfg, "--out", (dir / "out").string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(slurp(dir / "out" / "report.json"));
    CHECK(j["report"]["arms"].size() == 12);
    CHECK(fs::exists(dir / "out" / "curves.csv"));
    // one summary line per arm
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 12);

    const auto ocfg = write(dir / "o.json", R"({"kind":"perfect_correlation","alpha":0.5,"reps":100})");
    const auto o = run({"omega-diag", "--config", ocfg});
    REQUIRE(o.code == 0);
    const double slope = json::parse(o.out)["report"]["slope"].get<double>();
    CHECK(std::fabs(slope - 0.5) < 0.05);

    const auto bad = write(dir / "bad.json", R"({"replications":10})");
    CHECK(run({"mc-coverage", "--config", bad}).code == 2);
    const auto unstable = write(dir / "u.json", R"({"dgp":{"a1":[[0.9,0],[0,0.9]],"a2":[[0.3,0],[0,0.3]]}})");
    CHECK(run({"mc-rmse", "--config", unstable}).code == 2);
}

TEST_CASE("the installed binary behaves like the library entry point")
{
    const auto dir = scratch("binary");
    const std::string cmd = std::string(CLUSTERDR_CLI_PATH) + " simulate --format csv --seed 3 > " +
                            (dir / "a.csv").string() + " 2> " + (dir / "err.txt").string();
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(slurp(dir / "a.csv") == run({"simulate", "--format", "csv", "--seed", "3"}).out);
}
