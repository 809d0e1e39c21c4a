#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace accelbridge::cli {

/// Runs the accelbridge command line. Returns the process exit code:
/// 0 success, 1 user or input error, 2 internal error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace accelbridge::cli
