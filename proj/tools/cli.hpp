#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace streamvb::cli {

enum ExitCode : int {
  kOk = 0,
  kParseError = 1,
  kInvalidSpec = 2,
  kNotConverged = 3,
};

/// Entry point of the `streamvb` tool. Subcommands: fit-batch,
/// simulate-stream, mapreduce, secure-sum-demo.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Paths matching a shell pattern, sorted; empty when nothing matches.
std::vector<std::string> expand_glob(const std::string& pattern);

}  // namespace streamvb::cli
