#pragma once

// Command-line front end. Subcommands: cases, check-monge, decompose, train,
// benchmark, sweep, verify. Exit codes: 0 ok, 2 input error, 3 admissibility
// or verification failure, 4 training failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace saddle::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitAdmissibility = 3;
inline constexpr int kExitTraining = 4;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "SADDLE_OUTPUT_DIR";

/// Runs one invocation; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace saddle::cli
