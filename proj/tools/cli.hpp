#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace vprune::cli {

enum ExitCode : int {
  kOk = 0,
  kDataError = 1,  // unreadable or malformed input files
  kConfigError = 2,
  kServiceError = 3,  // generation transport or protocol failure
  kMisaligned = 4,
};

// Runs one `vprune` invocation; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr,
        std::istream& in = std::cin);

}  // namespace vprune::cli
