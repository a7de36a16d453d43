#pragma once

#include <string>
#include <vector>

namespace framecast {

/// Exit codes, stable for CI: 0 success, 1 validation error, 2 numerical
/// failure, 3 I/O failure.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitNumeric = 2,
  kExitIo = 3,
};

/// Runs one subcommand (gen-data, train, predict, eval, costmodel, bench,
/// gradcheck) and returns the process exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace framecast
