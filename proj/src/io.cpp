#include "clusterdr/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

#include "clusterdr/errors.hpp"

namespace clusterdr {

std::string format_double(double value)
{
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

double parse_double(std::string_view text)
{
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    if (!text.empty() && *begin == '+')
        ++begin;
    const auto result = std::from_chars(begin, end, value);
    if (text.empty() || result.ec != std::errc() || result.ptr != end)
        throw ValidationError("not a number: '" + std::string(text) + "'");
    return value;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_number)
{
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    if (quoted)
        throw ValidationError("line " + std::to_string(line_number) + ": unterminated quoted field");
    fields.push_back(std::move(field));
    return fields;
}

std::string quote_if_needed(const std::string& text)
{
    if (text.find_first_of(",\"\n") == std::string::npos)
        return text;
    std::string out = "\"";
    for (const char c : text) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + '"';
}

// Indices of the columns named prefix0, prefix1, ... in order.
std::vector<std::size_t> numbered_columns(const std::vector<std::string>& header, const std::string& prefix)
{
    std::map<std::size_t, std::size_t> found;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& name = header[c];
        if (name.rfind(prefix, 0) != 0)
            continue;
        const std::string suffix = name.substr(prefix.size());
        std::size_t index = 0;
        const auto res = std::from_chars(suffix.data(), suffix.data() + suffix.size(), index);
        if (suffix.empty() || res.ec != std::errc() || res.ptr != suffix.data() + suffix.size())
            throw ValidationError("unrecognised column '" + name + "'");
        if (!found.emplace(index, c).second)
            throw ValidationError("duplicate column '" + name + "'");
    }
    std::vector<std::size_t> columns;
    for (const auto& [index, column] : found) {
        if (index != columns.size())
            throw ValidationError("columns " + prefix + "* must be numbered contiguously from 0");
        columns.push_back(column);
    }
    return columns;
}

std::size_t column_of(const std::vector<std::string>& header, const std::string& name)
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
        throw ValidationError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

struct PendingMember {
    std::size_t time_index;
    IndividualRecord record;
};

}  // namespace

ClusteredDataset read_dataset_csv(std::istream& in)
{
    std::string line;
    std::size_t line_number = 1;
    if (!std::getline(in, line))
        throw ValidationError("dataset file is empty");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    const auto header = split_csv_line(line, line_number);

    const std::size_t id_col = column_of(header, "cluster_id");
    const std::size_t t_col = column_of(header, "time_index");
    const std::size_t r_col = column_of(header, "r");
    const std::size_t y_col = column_of(header, "y");
    const auto x_cols = numbered_columns(header, "x_");
    const auto w_cols = numbered_columns(header, "w_");
    if (2 + x_cols.size() + w_cols.size() + 2 != header.size())
        throw ValidationError("dataset header has unexpected columns");

    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<double>, std::vector<PendingMember>>> groups;

    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto fields = split_csv_line(line, line_number);
        const std::string where = "line " + std::to_string(line_number);
        if (fields.size() != header.size())
            throw ValidationError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));

        const std::string& id = fields[id_col];
        std::size_t time_index = 0;
        const auto& t_text = fields[t_col];
        const auto t_res = std::from_chars(t_text.data(), t_text.data() + t_text.size(), time_index);
        if (t_text.empty() || t_res.ec != std::errc() || t_res.ptr != t_text.data() + t_text.size())
            throw ValidationError(where + ": time_index must be a nonnegative integer");

        std::vector<double> x;
        for (const auto c : x_cols)
            x.push_back(parse_double(fields[c]));
        IndividualRecord record;
        for (const auto c : w_cols)
            record.w.push_back(parse_double(fields[c]));
        if (fields[r_col] == "1")
            record.r = true;
        else if (fields[r_col] != "0")
            throw ValidationError(where + ": r must be 0 or 1");
        if (!fields[y_col].empty()) {
            if (!record.r)
                throw ValidationError(where + ": outcome present but marked missing (cluster_id " + id + ")");
            record.y = parse_double(fields[y_col]);
        } else if (record.r) {
            throw ValidationError(where + ": outcome absent but marked observed (cluster_id " + id + ")");
        }
        record.time_index = time_index;

        auto [it, inserted] = groups.try_emplace(id);
        if (inserted) {
            order.push_back(id);
            it->second.first = x;
        } else if (it->second.first != x) {
            throw ValidationError(where + ": cluster covariates vary within cluster_id " + id);
        }
        it->second.second.push_back(PendingMember{time_index, std::move(record)});
    }
    if (order.empty())
        throw ValidationError("dataset file has no rows");

    std::vector<Cluster> clusters;
    clusters.reserve(order.size());
    for (const auto& id : order) {
        auto& [x, members] = groups.at(id);
        std::sort(members.begin(), members.end(),
                  [](const PendingMember& a, const PendingMember& b) { return a.time_index < b.time_index; });
        Cluster cluster{id, std::move(x), {}};
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (members[i].time_index != i)
                throw ValidationError("time_index values of cluster_id " + id +
                                      " are not unique and contiguous from 0");
            cluster.members.push_back(std::move(members[i].record));
        }
        clusters.push_back(std::move(cluster));
    }
    ClusteredDataset dataset(std::move(clusters));
    validate(dataset);
    return dataset;
}

ClusteredDataset read_dataset_csv_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open dataset file '" + path + "'");
    return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const ClusteredDataset& dataset)
{
    const std::size_t x_dim = dataset.x_dim();
    const std::size_t w_dim = dataset.w_dim();
    out << "cluster_id,time_index";
    for (std::size_t j = 0; j < x_dim; ++j)
        out << ",x_" << j;
    for (std::size_t j = 0; j < w_dim; ++j)
        out << ",w_" << j;
    out << ",r,y\n";
    for (const auto& c : dataset.clusters()) {
        const std::string id = quote_if_needed(c.id);
        for (const auto& m : c.members) {
            out << id << ',' << m.time_index;
            for (const double v : c.x)
                out << ',' << format_double(v);
            for (const double v : m.w)
                out << ',' << format_double(v);
            out << ',' << (m.r ? '1' : '0') << ',';
            if (m.y)
                out << format_double(*m.y);
            out << '\n';
        }
    }
}

void write_dataset_csv_file(const std::string& path, const ClusteredDataset& dataset)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ValidationError("cannot write dataset file '" + path + "'");
    write_dataset_csv(out, dataset);
}

nlohmann::ordered_json to_json(const EstimateReport& report)
{
    nlohmann::ordered_json j;
    j["estimator"] = to_string(report.estimator);
    j["theta_hat"] = report.theta_hat;
    j["n"] = report.n;
    j["G"] = report.G;
    j["variance_method"] = to_string(report.variance_method);
    j["variance"] = report.variance ? nlohmann::ordered_json(*report.variance) : nlohmann::ordered_json();
    j["ci_level"] = report.ci_level;
    j["ci"] = report.ci ? nlohmann::ordered_json::array({report.ci->lower, report.ci->upper})
                        : nlohmann::ordered_json();
    j["degenerate_variance"] = report.degenerate_variance;
    return j;
}

nlohmann::ordered_json to_json(const VarianceReport& report)
{
    nlohmann::ordered_json j;
    j["method"] = to_string(report.method);
    j["estimate_variance"] = report.estimate_variance;
    if (report.omega_hat)
        j["omega_hat"] = *report.omega_hat;
    if (report.bootstrap_reps) {
        j["bootstrap_reps"] = *report.bootstrap_reps;
        j["redraws"] = report.redraws;
    }
    if (report.percentile_ci)
        j["percentile_ci"] = {report.percentile_ci->lower, report.percentile_ci->upper};
    j["degenerate_flag"] = report.degenerate_flag;
    return j;
}

nlohmann::ordered_json to_json(const MonteCarloReport& report)
{
    nlohmann::ordered_json j;
    j["experiment"] = report.experiment;
    j["replications"] = report.replications;
    j["seed"] = report.seed;
    j["truth"] = report.truth;
    auto arms = nlohmann::ordered_json::array();
    for (const auto& arm : report.arms) {
        nlohmann::ordered_json a;
        a["label"] = arm.label;
        a["estimator"] = arm.estimator;
        a["specification"] = arm.specification;
        a[arm.x_name] = arm.x_value;
        a["metric"] = to_string(arm.metric);
        a["value"] = arm.value;
        a["mc_se"] = arm.mc_se;
        a["successes"] = arm.successes;
        a["failures"] = arm.failures;
        arms.push_back(std::move(a));
    }
    j["arms"] = std::move(arms);
    return j;
}

nlohmann::ordered_json to_json(const OmegaDiagnosticReport& report)
{
    nlohmann::ordered_json j;
    j["kind"] = to_string(report.kind);
    j["alpha"] = report.alpha;
    j["reps"] = report.reps;
    j["seed"] = report.seed;
    auto points = nlohmann::ordered_json::array();
    for (const auto& p : report.points)
        points.push_back({{"n", p.n},
                          {"num_clusters", p.num_clusters},
                          {"omega", p.omega},
                          {"omega_se", p.omega_se},
                          {"reference", p.reference}});
    j["points"] = std::move(points);
    j["regressor"] = report.regressor;
    j["slope"] = report.slope;
    j["slope_se"] = report.slope_se;
    j["log_n_correlation"] = report.log_n_correlation;
    j["covariance_projected"] = report.covariance_projected;
    return j;
}

nlohmann::ordered_json to_json(const SummaryConfig& config)
{
    nlohmann::ordered_json j;
    j["components"] = config.component_names();
    j["window_d"] = config.window_d;
    j["include_past_ry"] = config.include_past_ry;
    return j;
}

void write_curves_csv(std::ostream& out, const MonteCarloReport& report)
{
    out << "arm,x_value,metric,mc_se\n";
    for (const auto& arm : report.arms)
        out << quote_if_needed(arm.label) << ',' << format_double(arm.x_value) << ',' << format_double(arm.value)
            << ',' << format_double(arm.mc_se) << '\n';
}

void write_curves_csv(std::ostream& out, const OmegaDiagnosticReport& report)
{
    out << "arm,x_value,metric,mc_se\n";
    for (const auto& p : report.points)
        out << to_string(report.kind) << ',' << p.n << ',' << format_double(p.omega) << ','
            << format_double(p.omega_se) << '\n';
}

}  // namespace clusterdr
