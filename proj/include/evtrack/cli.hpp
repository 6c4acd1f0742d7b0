#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace evtrack {

inline constexpr const char* kVersion = "1.0.0";

/// Runs one `evtrack` invocation. Failures print a single line starting with
/// "error:" to `err` and return a nonzero status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace evtrack
