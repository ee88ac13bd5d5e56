// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ftsmoe {

/// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
class Date {
public:
    constexpr Date() = default;
    static Date from_ymd(int year, unsigned month, unsigned day);
    static constexpr Date from_days(std::int64_t days) {
        Date d;
        d.days_ = days;
        return d;
    }

    /// Accepts `YYYY-MM-DD` and `YYYY/M/D` (one- or two-digit month/day).
    static std::optional<Date> parse(std::string_view text);

    constexpr std::int64_t days() const { return days_; }
    int year() const;
    unsigned month() const;
    unsigned day() const;
    /// 0 = Monday ... 6 = Sunday
    unsigned weekday() const;

    std::string iso() const;

    constexpr Date operator+(std::int64_t n) const { return from_days(days_ + n); }
    constexpr std::int64_t operator-(Date other) const { return days_ - other.days_; }
    constexpr auto operator<=>(const Date&) const = default;

private:
    std::int64_t days_ = 0;
};

}  // namespace ftsmoe
