#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace wxscale {

/// Runs the command line (args exclude the program name) and returns the
/// process exit code. Diagnostics go to `err`, summaries to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wxscale
