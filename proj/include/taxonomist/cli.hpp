#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace taxonomist::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
/// The method said no: a failed gate, an exceeded budget, a drift alert.
inline constexpr int kExitRejected = 2;

struct CommandOutcome {
  int exit_code = kExitOk;
  std::string summary;
  std::optional<std::string> json_path;
};

/// Runs one command line (without the program name). Human output goes to
/// `out` unless --json is given, in which case `out` receives exactly one
/// JSON document. Diagnostics go to `err`.
CommandOutcome dispatch(const std::vector<std::string>& args, std::ostream& out,
                        std::ostream& err);

}  // namespace taxonomist::cli
