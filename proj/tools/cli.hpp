#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace protoreg::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kNumericalError = 4,
};

/// Runs one command. `args` excludes the program name. Results go to files
/// named on the command line (or `out`); diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protoreg::cli
