#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nsflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitVerification = 3;

/// Runs the command-line tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nsflow
