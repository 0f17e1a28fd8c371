#include <doctest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "clusterdr/errors.hpp"
#include "clusterdr/io.hpp"
#include "clusterdr/simulation.hpp"

using namespace clusterdr;

namespace {

ClusteredDataset parse(const std::string& text)
{
    std::istringstream in(text);
    return read_dataset_csv(in);
}

std::string emit(const ClusteredDataset& data)
{
    std::ostringstream out;
    write_dataset_csv(out, data);
    return out.str();
}

std::string error_of(const std::string& text)
{
    try {
        (void)parse(text);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("shortest round-trip number formatting")
{
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
    CHECK(format_double(-1e-300) == "-1e-300");
    for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-310, 123456789.125}) {
        CHECK(std::bit_cast<std::uint64_t>(parse_double(format_double(v))) == std::bit_cast<std::uint64_t>(v));
    }
    CHECK_THROWS_AS((void)parse_double("1.5x"), ValidationError);
    CHECK_THROWS_AS((void)parse_double(""), ValidationError);
}

TEST_CASE("CSV ingest")
{
    const auto data = parse(
        "cluster_id,time_index,x_0,w_0,w_1,r,y\n"
        "b,1,0.5,3,4,0,\n"
        "a,0,-1,1,2,1,7.25\n"
        "b,0,0.5,5,6,1,-1\n");
    REQUIRE(data.num_clusters() == 2);
    // first appearance order, members sorted by time
    CHECK(data.cluster(0).id == "b");
    CHECK(data.cluster(0).members[0].w == std::vector<double>{5, 6});
    CHECK(!data.cluster(0).members[1].r);
    CHECK(!data.cluster(0).members[1].y);
    CHECK(data.cluster(1).x == std::vector<double>{-1});
    CHECK(*data.cluster(1).members[0].y == 7.25);
    CHECK(data.w_dim() == 2);
    CHECK(data.x_dim() == 1);
}

TEST_CASE("CSV emit and ingest round trip")
{
    const std::string canonical =
        "cluster_id,time_index,x_0,w_0,r,y\n"
        "\"quoted, id\",0,1.5,0.1,1,2.75\n"
        "\"quoted, id\",1,1.5,-0.30000000000000004,0,\n"
        "plain,0,-2,1e-300,1,-0.5\n";
    CHECK(emit(parse(canonical)) == canonical);

    const auto sim = gen_homogeneous(HomogeneousDgp{}, 300, 2);
    const std::string text = emit(sim.dataset);
    CHECK(emit(parse(text)) == text);
}

TEST_CASE("CSV ingest errors")
{
    const std::string header = "cluster_id,time_index,x_0,w_0,r,y\n";
    CHECK(error_of(header + "g7,0,1,0,1,1\ng7,1,2,0,1,1\n").find("g7") != std::string::npos);
    CHECK(error_of(header + "a,0,1,0,0,2\n").find("outcome present but marked missing") != std::string::npos);
    CHECK(!error_of(header + "a,0,1,0,1,\n").empty());
    CHECK(!error_of(header + "a,0,1,0,1,1\na,2,1,0,1,1\n").empty());
    CHECK(!error_of(header + "a,0,1,0,2,1\n").empty());
    CHECK(!error_of(header + "a,0,1,zero,1,1\n").empty());
    CHECK(!error_of(header + "a,0,1,0,1\n").empty());
    CHECK(!error_of(header).empty());
    CHECK(!error_of("").empty());
    CHECK(!error_of("cluster_id,time_index,x_0,w_0,r,y,extra\na,0,1,0,1,1,3\n").empty());
    CHECK(!error_of("cluster_id,time_index,x_1,w_0,r,y\na,0,1,0,1,1\n").empty());
    CHECK(!error_of(header + "\"a,0,1,0,1,1\n").empty());
}

TEST_CASE("JSON reports keep every double bit for bit")
{
    EstimateReport report;
    report.estimator = EstimatorKind::dr;
    report.theta_hat = 1.0 / 3.0;
    report.n = 10;
    report.G = 4;
    report.variance_method = VarianceMethod::cluster_robust;
    report.variance = 2.0 / 7.0;
    report.ci = Interval{-0.1234567890123456789, 0.98765432109876543};
    const auto j = nlohmann::ordered_json::parse(to_json(report).dump());
    CHECK(j["estimator"] == "dr");
    CHECK(std::bit_cast<std::uint64_t>(j["theta_hat"].get<double>()) ==
          std::bit_cast<std::uint64_t>(report.theta_hat));
    CHECK(j["variance"].get<double>() == *report.variance);
    CHECK(j["ci"][0].get<double>() == report.ci->lower);
    CHECK(j["ci"][1].get<double>() == report.ci->upper);
    CHECK(j["n"] == 10);
    CHECK(j["G"] == 4);
}

TEST_CASE("curves CSV")
{
    MonteCarloReport report;
    ArmResult arm;
    arm.label = "n=4000/history_summary";
    arm.x_value = 4000;
    arm.metric = Metric::rmse;
    arm.value = 0.25;
    arm.mc_se = 0.01;
    report.arms.push_back(arm);
    std::ostringstream out;
    write_curves_csv(out, report);
    CHECK(out.str() == "arm,x_value,metric,mc_se\nn=4000/history_summary,4000,0.25,0.01\n");
}
