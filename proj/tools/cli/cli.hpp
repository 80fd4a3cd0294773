#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace semalign::cli {

/// Process exit codes.
enum ExitCode : int {
  kSuccess = 0,
  kInternal = 1,
  kUsage = 2,
  kData = 3,
  kService = 4,
  kDivergence = 5,
};

/// Runs one subcommand. `args` excludes the program name.
int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace semalign::cli
