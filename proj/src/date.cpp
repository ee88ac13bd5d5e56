// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/date.hpp"

#include <charconv>
#include <cstdio>

namespace ftsmoe {

namespace {

// Civil-from-days / days-from-civil (H. Hinnant's algorithms).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
    std::int64_t y;
    unsigned m;
    unsigned d;
};

Civil civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return {y + (m <= 2), m, d};
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(int y, unsigned m) {
    static constexpr unsigned table[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : table[m - 1];
}

std::optional<int> parse_int(std::string_view s, std::size_t min_digits, std::size_t max_digits) {
    if (s.size() < min_digits || s.size() > max_digits) return std::nullopt;
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

}  // namespace

Date Date::from_ymd(int year, unsigned month, unsigned day) {
    return from_days(days_from_civil(year, month, day));
}

std::optional<Date> Date::parse(std::string_view text) {
    char sep = 0;
    if (text.find('-') != std::string_view::npos) {
        sep = '-';
    } else if (text.find('/') != std::string_view::npos) {
        sep = '/';
    } else {
        return std::nullopt;
    }
    // Allow a trailing time component such as "2020-01-02 00:00:00".
    if (auto space = text.find_first_of(" T"); space != std::string_view::npos) text = text.substr(0, space);

    const auto first = text.find(sep);
    const auto second = text.find(sep, first + 1);
    if (second == std::string_view::npos || text.find(sep, second + 1) != std::string_view::npos) return std::nullopt;

    const std::size_t md_min = sep == '-' ? 2 : 1;
    auto y = parse_int(text.substr(0, first), 4, 4);
    auto m = parse_int(text.substr(first + 1, second - first - 1), md_min, 2);
    auto d = parse_int(text.substr(second + 1), md_min, 2);
    if (!y || !m || !d) return std::nullopt;
    if (*m < 1 || *m > 12) return std::nullopt;
    if (*d < 1 || static_cast<unsigned>(*d) > days_in_month(*y, static_cast<unsigned>(*m))) return std::nullopt;
    return from_ymd(*y, static_cast<unsigned>(*m), static_cast<unsigned>(*d));
}

int Date::year() const { return static_cast<int>(civil_from_days(days_).y); }
unsigned Date::month() const { return civil_from_days(days_).m; }
unsigned Date::day() const { return civil_from_days(days_).d; }

unsigned Date::weekday() const {
    // 1970-01-01 was a Thursday (index 3).
    const std::int64_t w = (days_ + 3) % 7;
    return static_cast<unsigned>(w < 0 ? w + 7 : w);
}

std::string Date::iso() const {
    const Civil c = civil_from_days(days_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(c.y), c.m, c.d);
    return buf;
}

}  // namespace ftsmoe
