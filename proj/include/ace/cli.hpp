#pragma once

#include <string>
#include <vector>

namespace ace {

// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 success, 2 config error, 3 numeric divergence, 4 data-contract
// error.
int run_cli(const std::vector<std::string>& args);

}  // namespace ace
