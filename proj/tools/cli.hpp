#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fmdroid/error.hpp"

namespace fmdroid::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitMissingDictionary = 3,
  kExitDimensionMismatch = 4,
  kExitParse = 5,
  kExitIo = 6,
  kExitInvalidInput = 7,
};

int exit_code_for(ErrorKind kind);

/// Runs one invocation. `args` excludes the program name. Diagnostics go to
/// `err` as a single "error: <kind>: <message>" line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace fmdroid::cli
