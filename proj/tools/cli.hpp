#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stunet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitTolerance = 3;
inline constexpr int kExitIo = 4;

// Runs one invocation; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stunet::cli
