#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace moa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `moa` tool. `args` excludes the program name. Runtime
/// failures are reported on `err` as one JSON line {"error": kind, "message": ...}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace moa::cli
