#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xmas {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerificationFailed = 1,
  kExitInvalidInput = 2,
  kExitIo = 3,
  kExitBadArguments = 4,
};

/// Runs the `xmas` command line. `args` excludes the program name. Reports
/// go to `out` as JSON; diagnostics go to `err`, filtered by the XMAS_LOG
/// environment variable (error, warn, info, debug; default warn).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xmas
