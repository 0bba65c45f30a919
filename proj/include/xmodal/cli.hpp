#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xmodal {

// Entry point of the `xmodal` tool; args excludes the program name.
// Returns the process exit code: 0 on success, 2 for usage errors, 1 for
// any other failure. Failures print one line "error: <Category>: <message>"
// to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xmodal
