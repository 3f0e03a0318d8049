#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fcache::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitMissingFile = 2;
inline constexpr int kExitCorrupt = 3;
inline constexpr int kExitUsage = 64;

/// Entry point shared by the executable and the CLI tests. args[0] is the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fcache::cli
