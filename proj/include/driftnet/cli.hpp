#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace driftnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kInternal = 3 };

/// Parses and runs one subcommand (generate, train, evaluate, report, selftest).
/// Normal output goes to `out`, usage text and diagnostics to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace driftnet::cli
