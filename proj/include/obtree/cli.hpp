#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace obtree {

// Exit codes of the command-line driver.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

// Runs the `obtree` command line; args excludes the program name. Records go
// to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace obtree
