#pragma once

#include <string>

namespace u5apc {

// Calendar months are encoded as whole months since January 1900
// (1900-01 == 0). Years are derived from the index, never reparsed.
using MonthIndex = int;

constexpr int kEpochYear = 1900;

constexpr int year_of(MonthIndex m) noexcept { return kEpochYear + m / 12; }
constexpr int month_of_year(MonthIndex m) noexcept { return m % 12 + 1; }

constexpr MonthIndex make_month(int year, int month) noexcept {
    return (year - kEpochYear) * 12 + (month - 1);
}

// Parses "YYYY-MM". Throws std::invalid_argument on malformed input.
MonthIndex parse_month(const std::string& text);

// Formats back to "YYYY-MM".
std::string format_month(MonthIndex m);

} // namespace u5apc
