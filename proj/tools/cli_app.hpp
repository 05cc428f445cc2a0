#pragma once

#include <iosfwd>

namespace hsps::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitSolver = 3,
    kExitIo = 4,
};

/// Runs one command. Tables go to `out`, diagnostics and JSON error bodies to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hsps::cli
