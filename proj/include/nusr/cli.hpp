#pragma once

#include <string>
#include <vector>

namespace nusr {

// Full command-line surface. Returns the process exit code: 0 success,
// 1 usage/config error, 2 data error (dimensions, domains, file formats, I/O),
// 3 internal error. Never throws.
int run_cli(int argc, const char* const* argv);

// Test-friendly wrapper; args exclude the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace nusr
