#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace novelty::timeutil {

// Proleptic Gregorian day arithmetic (Howard Hinnant's algorithms), so
// timestamp handling does not depend on the host time zone database.

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
    int year;
    unsigned month;  // 1..12
    unsigned day;    // 1..31
};

inline CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2)), m, d};
}

inline bool valid_civil(int y, unsigned m, unsigned d) {
    if (m < 1 || m > 12 || d < 1) return false;
    static const unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    unsigned len = lengths[m - 1];
    bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    if (m == 2 && leap) len = 29;
    return d <= len;
}

// Parses "YYYY-MM-DDThh:mm:ss" with a trailing "Z" or "+hh:mm"/"-hh:mm"
// offset. Fractional seconds are accepted and truncated. Returns UTC seconds
// since the epoch, or nullopt when the text is not a timestamp.
inline std::optional<std::int64_t> parse_iso8601(std::string_view s) {
    auto digit = [](char c) { return c >= '0' && c <= '9'; };
    auto num = [&](std::size_t pos, std::size_t len) -> std::optional<long> {
        long v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (i >= s.size() || !digit(s[i])) return std::nullopt;
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    if (s.size() < 20) return std::nullopt;
    if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' ||
        s[16] != ':')
        return std::nullopt;
    auto year = num(0, 4), month = num(5, 2), day = num(8, 2);
    auto hour = num(11, 2), minute = num(14, 2), second = num(17, 2);
    if (!year || !month || !day || !hour || !minute || !second) return std::nullopt;
    if (!valid_civil(static_cast<int>(*year), static_cast<unsigned>(*month),
                     static_cast<unsigned>(*day)))
        return std::nullopt;
    if (*hour > 23 || *minute > 59 || *second > 60) return std::nullopt;

    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        if (pos >= s.size() || !digit(s[pos])) return std::nullopt;
        while (pos < s.size() && digit(s[pos])) ++pos;
    }
    std::int64_t offset = 0;
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
        ++pos;
    } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
        int sign = s[pos] == '+' ? 1 : -1;
        auto oh = num(pos + 1, 2);
        if (!oh || pos + 3 >= s.size() || s[pos + 3] != ':') return std::nullopt;
        auto om = num(pos + 4, 2);
        if (!om) return std::nullopt;
        offset = sign * (*oh * 3600 + *om * 60);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;

    std::int64_t days = days_from_civil(static_cast<int>(*year), static_cast<unsigned>(*month),
                                        static_cast<unsigned>(*day));
    return days * 86400 + *hour * 3600 + *minute * 60 + *second - offset;
}

// Canonical "YYYY-MM-DDThh:mm:ssZ" form.
inline std::string format_iso8601(std::int64_t ts) {
    std::int64_t days = ts / 86400;
    std::int64_t rem = ts % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    CivilDate cd = civil_from_days(days);
    char buf[44];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", cd.year, cd.month,
                  cd.day, static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
    return buf;
}

}  // namespace novelty::timeutil
