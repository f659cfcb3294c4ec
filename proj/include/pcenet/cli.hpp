#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcenet::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

/// Parses and runs one invocation (`args[0]` is the program name).
/// Errors are reported as a single `error[<kind>]: <message>` line on err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace pcenet::cli
