#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace echodoa::cli {

enum ExitCode : int { ok = 0, runtime_error = 1, usage_error = 2, validation_error = 3 };

/// Parses `args` (without the program name) and runs the subcommand. Regular
/// output goes to `out`; errors go to `err` as one line
/// "error: kind=<kind> message=<text>".
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace echodoa::cli
