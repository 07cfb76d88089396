// Subcommands check / simulate / analyze / demo.
//
// Exit codes: 0 success, 1 structural-condition failure, 2 configuration
// error, 3 numerical failure.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cnls/io.hpp"

namespace cnls::cli {

enum ExitCode : int { exit_ok = 0, exit_structural = 1, exit_config = 2, exit_numerical = 3 };

/// Full default configuration for a built-in system.
json default_config(const std::string& builtin = "example21");

/// Applies "a.b.c=value"; value is parsed as JSON when possible, else taken as
/// a string. Throws std::invalid_argument on a malformed assignment.
void apply_override(json& config, const std::string& assignment);

/// Throws std::invalid_argument on unknown keys or out-of-range values.
void validate_config(const json& config);

/// Entry point; never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cnls::cli
