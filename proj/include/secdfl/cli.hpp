#pragma once

#include <string>
#include <vector>

namespace secdfl {

// Entry point behind the secdfl binary; takes argv without the program name.
// Factored out so tests can drive the CLI in-process.
//
// Exit codes: 0 success; 1 usage or runtime error. The attack subcommand
// additionally uses 0 = unique reconstruction (breach) and 4 =
// underdetermined (privacy held).
int run_cli(const std::vector<std::string>& args);

}  // namespace secdfl
