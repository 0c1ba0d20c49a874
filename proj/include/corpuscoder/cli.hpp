#pragma once

#include <iosfwd>

namespace corpuscoder::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kDataError = 2,
  kCompletedWithFailures = 3,
  kBudgetHalt = 4,
  kAuthFailure = 5,
};

/// Entry point for the `corpuscoder` tool; results go to `out`, diagnostics
/// to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace corpuscoder::cli
