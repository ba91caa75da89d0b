#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace memfix {

/// A UTC instant at one-second resolution. Every datetime in the toolkit is one of these.
using UtcTime = std::chrono::sys_seconds;

UtcTime utc_now();

/// Builds an instant from calendar fields; nullopt if any field is out of range.
std::optional<UtcTime> make_utc(int year, unsigned month, unsigned day, unsigned hour,
                                unsigned minute, unsigned second);

/// Parses the 14-digit YYYYMMDDhhmmss form used inside URI-Ms.
std::optional<UtcTime> parse_timestamp14(std::string_view text);
std::string format_timestamp14(UtcTime t);

/// RFC 3339 in the single form the toolkit writes: "YYYY-MM-DDThh:mm:ssZ".
std::optional<UtcTime> parse_rfc3339(std::string_view text);
std::string format_rfc3339(UtcTime t);

}  // namespace memfix
