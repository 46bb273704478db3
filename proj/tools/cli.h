#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ddmpc {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitValidation = 2,
  kExitInitialInfeasible = 3,
  kExitMonitorViolation = 4,
};

/// Runs the tool on `args` (without the program name).
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace ddmpc
