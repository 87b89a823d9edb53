#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eqgan::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3 };

/// Parses `args` (without the program name) and dispatches to a subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace eqgan::cli
