#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chattox::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFlagged = 1;  // scan-captions found toxic lines
inline constexpr int kExitUsage = 2;    // bad arguments or unreadable input

/// Runs the command line `args` (without the program name). Standard input
/// and both output streams are injected so the CLI can be driven in-process.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace chattox::cli
