#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ecosim {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 1,
  kExitNumericalError = 2,
};

/// Entry point behind the `ecosim` binary. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ecosim
