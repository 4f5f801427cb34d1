#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pidd::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kFormat = 3, kNumeric = 4 };

/// Runs one command line (args exclude the program name). Output and
/// diagnostics go to the given streams; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pidd::cli
