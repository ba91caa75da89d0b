#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace memfix::cli {

enum ExitCode : int {
    kOk = 0,            // success, Match
    kNegative = 1,      // Tampered, NotFound, failed audit
    kInconclusive = 2,  // Inconclusive, TimeMap flux
    kUsage = 3,         // bad arguments or inputs, mismatched manifests
    kFailure = 4,       // fetch or ledger failure, nothing hashable
};

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memfix::cli
