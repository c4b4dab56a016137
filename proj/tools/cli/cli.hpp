#pragma once

#include <ostream>

namespace opdlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitViolation = 1;
inline constexpr int kExitInputError = 2;

/// Environment variable naming the default parent of output directories.
inline constexpr const char* kOutputRootEnv = "OPDLAB_OUTPUT_ROOT";

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace opdlab::cli
