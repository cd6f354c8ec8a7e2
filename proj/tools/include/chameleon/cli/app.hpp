#pragma once

// chameleon-sim command dispatch. Kept out of main() so tests can drive the
// commands in-process.

#include <ostream>
#include <string>
#include <vector>

namespace chameleon::cli {

enum class ExitCode : int { ok = 0, failure = 1, usage = 2, io = 3, parse = 4, validation = 5, capacity = 6 };

/// Every failure prints exactly one line on `err`:
///   chameleon-sim: error: <category>: <message>
/// with category one of usage, io, parse, validation, capacity, internal.
inline constexpr const char* kErrorPrefix = "chameleon-sim: error: ";

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Reads CHAMELEON_SIM_LOG (off, error, warn, info, debug, trace) and
/// configures the stderr logger. Unknown values fall back to warn.
void configure_logging();

}  // namespace chameleon::cli
