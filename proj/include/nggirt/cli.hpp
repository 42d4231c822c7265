#pragma once

#include <iosfwd>

namespace nggirt {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,       // bad arguments or configuration
  kExitData = 2,        // unreadable or invalid input data, empty chain, I/O failure
  kExitTestFailed = 3,  // geweke ran to completion but the report says FAIL
};

/// Entry point of `nggirt simulate | fit | summarize | geweke`. Relative
/// output paths are resolved against $NGGIRT_OUTPUT_ROOT when it is set.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nggirt
