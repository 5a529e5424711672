#include "dockflow/time.hpp"

#include <cstdio>

namespace dockflow {

std::int64_t days_from_civil(int year, int month, int day) {
    // Shift the year so the leap day is the last day of the shifted year.
    year -= month <= 2;
    const std::int64_t era = (year >= 0 ? year : year - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(year - era * 400);             // [0, 399]
    const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;  // [0, 365]
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;               // [0, 146096]
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t days, int& year, int& month, int& day) {
    days += 719468;
    const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(days - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    year = static_cast<int>(y + (month <= 2));
}

Timestamp make_timestamp(int year, int month, int day, int hour, int minute, int second) {
    return days_from_civil(year, month, day) * kSecondsPerDay + hour * 3600 + minute * 60 + second;
}

namespace {

bool parse_fixed_int(const std::string& s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    int v = 0;
    for (std::size_t i = 0; i < len; ++i) {
        char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

bool valid_date(int y, int mo, int d) {
    if (mo < 1 || mo > 12 || d < 1) return false;
    static const int lens[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int len = lens[mo - 1];
    bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    if (mo == 2 && leap) len = 29;
    return d <= len;
}

}  // namespace

std::optional<Timestamp> parse_timestamp(const std::string& text) {
    int y, mo, d, h, mi, se = 0;
    if (!parse_fixed_int(text, 0, 4, y) || text.size() < 16) return std::nullopt;
    if (text[4] != '-' || text[7] != '-') return std::nullopt;
    if (!parse_fixed_int(text, 5, 2, mo) || !parse_fixed_int(text, 8, 2, d)) return std::nullopt;
    if (text[10] != ' ' && text[10] != 'T') return std::nullopt;
    if (!parse_fixed_int(text, 11, 2, h) || text[13] != ':') return std::nullopt;
    if (!parse_fixed_int(text, 14, 2, mi)) return std::nullopt;
    std::size_t pos = 16;
    if (pos < text.size() && text[pos] == ':') {
        if (!parse_fixed_int(text, pos + 1, 2, se)) return std::nullopt;
        pos += 3;
        if (pos < text.size() && text[pos] == '.') {
            ++pos;
            while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;  // truncate
        }
    }
    if (pos != text.size()) return std::nullopt;
    if (!valid_date(y, mo, d) || h > 23 || mi > 59 || se > 59) return std::nullopt;
    return make_timestamp(y, mo, d, h, mi, se);
}

std::optional<std::int64_t> parse_date(const std::string& text) {
    int y, mo, d;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    if (!parse_fixed_int(text, 0, 4, y) || !parse_fixed_int(text, 5, 2, mo) ||
        !parse_fixed_int(text, 8, 2, d))
        return std::nullopt;
    if (!valid_date(y, mo, d)) return std::nullopt;
    return days_from_civil(y, mo, d);
}

int hour_of_day(Timestamp ts) {
    return static_cast<int>((ts - day_index(ts) * kSecondsPerDay) / kSecondsPerHour);
}

int day_of_month(Timestamp ts) {
    int y, mo, d;
    civil_from_days(day_index(ts), y, mo, d);
    return d;
}

int weekday(Timestamp ts) {
    // 1970-01-01 was a Thursday, i.e. 3 in Monday-based numbering.
    return static_cast<int>(((day_index(ts) + 3) % 7 + 7) % 7);
}

std::string format_timestamp(Timestamp ts) {
    int y, mo, d;
    civil_from_days(day_index(ts), y, mo, d);
    const int rem = static_cast<int>(ts - day_index(ts) * kSecondsPerDay);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", y, mo, d, rem / 3600,
                  rem / 60 % 60, rem % 60);
    return buf;
}

std::string format_date(std::int64_t days) {
    int y, mo, d;
    civil_from_days(days, y, mo, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, mo, d);
    return buf;
}

}  // namespace dockflow
