#pragma once

// Subcommands of the cellguard tool. Each returns a process exit code:
// 0 success, 1 runtime error, 2 non-convergence, 64 usage error.

#include <iosfwd>
#include <string>
#include <vector>

namespace cellguard::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotConverged = 2;
inline constexpr int kExitUsage = 64;

/// args excludes the program name. JSON goes to the --output file, or to
/// `out` when no file is given; messages go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cellguard::cli
