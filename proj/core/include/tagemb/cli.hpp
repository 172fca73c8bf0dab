#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tagemb {

inline constexpr const char* kVersion = "0.1.0";

// args excludes the program name. Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace tagemb
