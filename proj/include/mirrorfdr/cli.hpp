#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mirrorfdr {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitNumerical = 3 };

/// Runs the `mirrorfdr` command line. args[0] is the program name. Fatal
/// errors are reported as a JSON object on `err` (and in <out>/error.json)
/// and mapped to an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mirrorfdr
