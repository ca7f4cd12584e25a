#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace maq2l {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitIo = 4,
};

// Entry point shared by the executable and the tests. args excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace maq2l
