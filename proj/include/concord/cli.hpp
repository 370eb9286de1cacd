#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace concord {

/// Runs the command line `args` (without the program name). Reports go to
/// `out` unless --out is given; diagnostics go to `err`. Returns the exit
/// code: 0 ok, 1 I/O or configuration, 2 validation, 3 non-convergence.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace concord
