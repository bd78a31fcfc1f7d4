#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace oodbatch {

/// Runs the `oodbatch` command line with `args` (program name excluded).
/// Returns 0 on success, 2 on usage/configuration errors, 1 on runtime
/// failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace oodbatch
