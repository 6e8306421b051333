#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace fieldsync {

using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;

// Accepts "YYYY-MM-DDTHH:MM:SS[.frac](Z|+hh:mm|-hh:mm)". Fractions finer
// than a microsecond are truncated.
std::optional<Timestamp> parse_rfc3339(std::string_view text);

// Always UTC with a trailing 'Z'; fractional digits only when nonzero.
std::string format_rfc3339(Timestamp ts);

}  // namespace fieldsync
