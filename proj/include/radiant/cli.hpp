#pragma once
#include <iosfwd>
#include <string>
#include <vector>

namespace radiant::cli {

enum ExitCode : int { ok = 0, runtime_failure = 1, usage_failure = 2 };

/// Runs one `radiant` invocation. `args` excludes the program name.
/// JSON results and structured errors go to `out`; logs and help text go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace radiant::cli
