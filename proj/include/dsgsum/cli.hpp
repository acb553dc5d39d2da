#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dsgsum::cli {

// Subcommands: extract | train | summarize | evaluate | sigtest.
// Exit codes: 0 success, 1 usage error, 2 data error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsgsum::cli
