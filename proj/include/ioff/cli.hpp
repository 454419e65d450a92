#pragma once

#include <iosfwd>

namespace ioff {

// Exit codes are a stable scripting contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitInfeasible = 3;

/// Entry point of the `ioff` tool: plan, simulate, execute, sweep, compare.
/// Output files are staged in memory and renamed into place only after the
/// whole command succeeded, so a failing run leaves no partial traces.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ioff
