#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cwssim {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitIo = 2 };

/// Runs the command line tool. `args[0]` is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cwssim
