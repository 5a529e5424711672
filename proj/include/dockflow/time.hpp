#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace dockflow {

// Wall-clock civil time as seconds since 1970-01-01 00:00:00.  No time zones,
// no leap seconds: every day is exactly 86400 seconds, which keeps hour and
// day arithmetic exact and portable.
using Timestamp = std::int64_t;

inline constexpr Timestamp kSecondsPerHour = 3600;
inline constexpr Timestamp kSecondsPerDay = 86400;

// Days since the epoch for a civil date (proleptic Gregorian).
std::int64_t days_from_civil(int year, int month, int day);

// Inverse of days_from_civil.
void civil_from_days(std::int64_t days, int& year, int& month, int& day);

Timestamp make_timestamp(int year, int month, int day, int hour = 0, int minute = 0, int second = 0);

// Accepts "YYYY-MM-DD HH:MM:SS", a 'T' separator, missing seconds, and a
// fractional-seconds tail (truncated).  Returns nullopt on anything else.
std::optional<Timestamp> parse_timestamp(const std::string& text);

// Accepts "YYYY-MM-DD"; returns the day index (days since epoch).
std::optional<std::int64_t> parse_date(const std::string& text);

// Floor semantics, so pre-epoch timestamps decompose correctly too.
inline Timestamp floor_hour(Timestamp ts) {
    Timestamp r = ts % kSecondsPerHour;
    if (r < 0) r += kSecondsPerHour;
    return ts - r;
}

inline std::int64_t day_index(Timestamp ts) {
    std::int64_t d = ts / kSecondsPerDay;
    return d * kSecondsPerDay > ts ? d - 1 : d;
}

int hour_of_day(Timestamp ts);
int day_of_month(Timestamp ts);

// Monday = 0 ... Sunday = 6.
int weekday(Timestamp ts);

// "YYYY-MM-DDTHH:MM:SS"
std::string format_timestamp(Timestamp ts);

// "YYYY-MM-DD"
std::string format_date(std::int64_t days);

}  // namespace dockflow
