#pragma once

#include <string>
#include <vector>

namespace fedsim {

// Full command-line front end (subcommands run, sweep, check, partition-info).
// args is argv[1..]. Returns the process exit code: 0 success, 1 runtime or
// verification failure, 2 configuration error.
int cli_run(std::vector<std::string> args);

}  // namespace fedsim
