#pragma once

// Command-line front end: `transport <estimate|simulate|sensitivity|quadratic-compare> [flags]`.

#include <ostream>
#include <string>
#include <vector>

namespace transport {

// Runs one command line (args[0] is the program name) and returns the exit
// code. Errors are reported on `err` as a JSON object.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace transport
