#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "edgeinfer/error.hpp"

namespace edgeinfer::cli {

/// Process exit codes. Frozen; docs/exit-codes.md mirrors this table.
enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIoFailure = 3,
  kBadModel = 4,
  kBadData = 5,
  kQuantization = 6,
  kTraining = 7,
  kReport = 8,
  kBadArgument = 9,
};

int exit_code_for(ErrorCode code);

/// Runs the tool with `args` (program name excluded) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace edgeinfer::cli
