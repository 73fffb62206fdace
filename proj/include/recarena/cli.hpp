#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace recarena::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitJudgeQuality = 3;

/// Runs the command line `args` (without the program name) and returns the
/// process exit code. All output goes to `out` and `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace recarena::cli
