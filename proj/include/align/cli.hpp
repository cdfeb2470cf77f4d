#pragma once

#include <iosfwd>

namespace align {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitIo = 2;

/// Entry point shared by the executable and the tests. `serve` blocks.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace align
