#pragma once

#include <string>
#include <vector>

namespace linkmoe::cli {

/// Runs one CLI invocation (args exclude the program name). Returns the
/// process exit code: 0 on success, nonzero after printing an error. Kept as
/// a library call so tests can drive whole pipelines in-process.
int run(const std::vector<std::string>& args);

}  // namespace linkmoe::cli
