#pragma once

#include <string>
#include <vector>

namespace soilspec::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one subcommand. Exit codes: 0 success, 1 runtime failure,
/// 2 usage or config error.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

}  // namespace soilspec::cli
