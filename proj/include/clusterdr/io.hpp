#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include <json.hpp>

#include "clusterdr/core_data.hpp"
#include "clusterdr/estimators.hpp"
#include "clusterdr/simulation.hpp"
#include "clusterdr/variance.hpp"

namespace clusterdr {

// Dataset CSV: header
//   cluster_id,time_index,x_0..x_p,w_0..w_q,r,y
// one row per individual; y is an empty field when r = 0.
// Rows may appear in any order; clusters keep first-appearance order and
// members are sorted by time_index. Numbers are written in the shortest
// representation that round-trips.

[[nodiscard]] ClusteredDataset read_dataset_csv(std::istream& in);
[[nodiscard]] ClusteredDataset read_dataset_csv_file(const std::string& path);
void write_dataset_csv(std::ostream& out, const ClusteredDataset& dataset);
void write_dataset_csv_file(const std::string& path, const ClusteredDataset& dataset);

/// Shortest round-trip decimal representation.
[[nodiscard]] std::string format_double(double value);
[[nodiscard]] double parse_double(std::string_view text);

[[nodiscard]] nlohmann::ordered_json to_json(const EstimateReport& report);
[[nodiscard]] nlohmann::ordered_json to_json(const VarianceReport& report);
[[nodiscard]] nlohmann::ordered_json to_json(const MonteCarloReport& report);
[[nodiscard]] nlohmann::ordered_json to_json(const OmegaDiagnosticReport& report);
[[nodiscard]] nlohmann::ordered_json to_json(const SummaryConfig& config);

/// Curve rows: arm,x_value,metric,mc_se
void write_curves_csv(std::ostream& out, const MonteCarloReport& report);
void write_curves_csv(std::ostream& out, const OmegaDiagnosticReport& report);

}  // namespace clusterdr
