#pragma once

#include <iosfwd>

namespace clusterdr::cli {

enum ExitCode : int {
    kSuccess = 0,
    kInputError = 2,
    kEstimationFailure = 3,
    kInternalError = 4,
};

/// Entry point of the `clusterdr` command-line tool. Writes reports to
/// `out` (or to --out files) and diagnostics to `err`; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace clusterdr::cli
