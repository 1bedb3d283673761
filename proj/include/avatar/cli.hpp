#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace avatar {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDiverged = 3;

/// Entry point for the `avatar` tool. args excludes the program name.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace avatar
