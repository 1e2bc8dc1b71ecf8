#include "calendar.hpp"

#include <cstdio>
#include <stdexcept>

namespace u5apc {

MonthIndex parse_month(const std::string& text) {
    int year = 0;
    int month = 0;
    char trailing = '\0';
    const int got = std::sscanf(text.c_str(), "%d-%d%c", &year, &month, &trailing);
    if (got != 2 || text.size() != 7 || text[4] != '-') {
        throw std::invalid_argument("malformed month '" + text + "' (expected YYYY-MM)");
    }
    if (month < 1 || month > 12 || year < kEpochYear || year > 2200) {
        throw std::invalid_argument("month '" + text + "' out of supported range");
    }
    return make_month(year, month);
}

std::string format_month(MonthIndex m) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year_of(m), month_of_year(m));
    return buf;
}

} // namespace u5apc
