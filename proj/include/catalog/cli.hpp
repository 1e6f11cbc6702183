#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace catalog::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kEmpty = 1;  // not found, empty result, fsck findings
inline constexpr int kUsage = 2;
inline constexpr int kFailure = 3;  // store or protocol error

using Env = std::function<std::optional<std::string>(const std::string&)>;

std::optional<std::string> process_env(const std::string& name);

// "500ms", "30s", "10m", "2h"; a bare number means seconds. Throws InvalidArgument.
std::chrono::nanoseconds parse_duration(std::string_view text);

// `args` excludes the program name. Diagnostics go to `err` as one
// `E:<code>:<message>` line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Env& env = process_env);

}  // namespace catalog::cli
