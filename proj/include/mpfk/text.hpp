#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mpfk {

/// Shortest decimal that round-trips to the same double ("inf", "-inf", "nan" for specials).
std::string format_number(double v);
/// Empty string for nullopt.
std::string format_optional(const std::optional<double>& v);

/// Splits one CSV line on commas and trims surrounding whitespace. No quoting.
std::vector<std::string> split_csv_line(std::string_view line);

/// Strict full-string parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view text);

}  // namespace mpfk
