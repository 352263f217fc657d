#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dinf {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInvariant = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitConvergence = 4,
  kExitUndefinedMetric = 5,
};

/// Runs one command line (without the program name) and returns its exit
/// code. Human-readable output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dinf
