#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ade {

/// Calendar date with day resolution, stored as days since 1970-01-01.
struct Date {
    int32_t days = 0;

    friend auto operator<=>(const Date&, const Date&) = default;
};

namespace detail {

// Civil-calendar conversions (Hinnant's algorithms).
inline int64_t days_from_civil(int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

inline void civil_from_days(int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t yr = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yr + (m <= 2));
}

inline bool is_leap_year(int y) {
    return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0);
}

inline unsigned last_day_of_month(int y, unsigned m) {
    static constexpr unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap_year(y)) return 29;
    return lengths[m - 1];
}

}  // namespace detail

/// Parses "YYYY-MM-DD". Throws std::invalid_argument on any deviation.
inline Date parse_date(const std::string& s) {
    auto bad = [&] { throw std::invalid_argument("invalid date: '" + s + "' (expected YYYY-MM-DD)"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') bad();
    for (size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (s[i] < '0' || s[i] > '9') bad();
    const int y = std::stoi(s.substr(0, 4));
    const unsigned m = static_cast<unsigned>(std::stoi(s.substr(5, 2)));
    const unsigned d = static_cast<unsigned>(std::stoi(s.substr(8, 2)));
    if (m < 1 || m > 12 || d < 1 || d > detail::last_day_of_month(y, m)) bad();
    return Date{static_cast<int32_t>(detail::days_from_civil(y, m, d))};
}

inline std::string to_string(Date date) {
    int y;
    unsigned m, d;
    detail::civil_from_days(date.days, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, d);
    return buf;
}

inline int days_between(Date from, Date to) { return to.days - from.days; }

inline Date add_days(Date d, int n) { return Date{d.days + n}; }

}  // namespace ade
