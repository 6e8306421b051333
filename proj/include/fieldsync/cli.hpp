#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fieldsync::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;  // validation and configuration errors
inline constexpr int kExitOffline = 3;
inline constexpr int kExitService = 4;

// Runs one command line (without the program name) in-process. Reports go
// to `out`, diagnostics to `err`. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fieldsync::cli
