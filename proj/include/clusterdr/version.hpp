#pragma once

namespace clusterdr {

inline constexpr const char* kVersion = "0.1.0";
// Bumped whenever the CSV columns or report JSON layout change.
inline constexpr int kSchemaVersion = 1;

}  // namespace clusterdr
