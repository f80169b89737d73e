#pragma once

#include <iosfwd>

namespace infalign::cli {

enum ExitCode : int { kSuccess = 0, kVerificationFailed = 1, kConfigError = 2, kIoFailure = 3 };

/// Entry point of the `infalign` tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace infalign::cli
