#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scoregrad::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line given without the program name, e.g.
/// {"forecast", "--model", "m", ...}. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scoregrad::cli
