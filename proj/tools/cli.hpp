#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dipmatte::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kIo = 2, kDivergence = 3 };

/// Runs the command-line front end with argv-style arguments (args[0] is the
/// program name). Diagnostics go to `err`, reports to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dipmatte::cli
