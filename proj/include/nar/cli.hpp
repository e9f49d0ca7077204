#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nar {

// Process exit codes; part of the command-line contract.
enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitConfig = 2,
    kExitIo = 3,
    kExitMissingInput = 4,
    kExitDivergence = 5,
    kExitCheckpoint = 6,
    kExitFairness = 7,
};

// Runs one command line (args[0] is the program name). Reports go to `out`,
// progress and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nar
