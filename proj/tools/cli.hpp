#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace varconet::cli {

// Parses the arguments after the program name and runs one subcommand. Returns 0 on success, 1 when the
// pipeline fails and 2 on usage errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace varconet::cli
