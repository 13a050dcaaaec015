#pragma once

// Entry point behind the sgncap executable. Subcommands: generate-data, train,
// evaluate, caption, gradcheck, inspect-attention.

#include <ostream>
#include <string>
#include <vector>

namespace sgn {

// Returns the process exit code. Contract and IO errors become a one-line
// "error: ..." diagnostic on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sgn
