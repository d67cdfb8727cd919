#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace onerel {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

// Entry point of the `onerel` tool. `input` stands in for standard input
// (used by `tag` when no --input is given).
int run_cli(const std::vector<std::string>& args, std::istream& input, std::ostream& out,
            std::ostream& err);

}  // namespace onerel
