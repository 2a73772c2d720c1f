#pragma once

#include <string>
#include <vector>

namespace fgted::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Parses argv (argv[0] is the program name), runs the subcommand and maps
// errors to exit codes. Diagnostics go to standard error.
int dispatch(const std::vector<std::string>& argv);
int dispatch(int argc, char** argv);

}  // namespace fgted::cli
