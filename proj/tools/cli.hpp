#pragma once

// `gdc` command line. Exit codes: 0 ok, 2 bad input, 3 runtime failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace gdc {

inline constexpr int kExitBadInput = 2;
inline constexpr int kExitRuntime = 3;

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gdc
