#pragma once

#include <ostream>

namespace pretest::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitStatistical = 3;
inline constexpr int kExitConfig = 4;

inline constexpr int kSchemaVersion = 1;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pretest::cli
