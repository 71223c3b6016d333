#pragma once

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "evsent/error.hpp"

namespace evsent {

// UTC, second precision.
using timestamp = std::chrono::sys_seconds;

namespace detail {

inline std::optional<int> parse_digits(std::string_view s, std::size_t pos, std::size_t len) {
    if (pos + len > s.size()) return std::nullopt;
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return std::nullopt;
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

} // namespace detail

// Accepts "YYYY-MM-DDTHH:MM:SS" followed by "Z" or "+00:00", and the date-only
// form "YYYY-MM-DD" (midnight UTC).
inline std::optional<timestamp> try_parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    auto y = detail::parse_digits(s, 0, 4);
    auto mo = detail::parse_digits(s, 5, 2);
    auto d = detail::parse_digits(s, 8, 2);
    if (!y || !mo || !d || s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
    if (!ymd.ok()) return std::nullopt;
    timestamp day_start = sys_days{ymd};
    if (s.size() == 10) return day_start;

    if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
    auto hh = detail::parse_digits(s, 11, 2);
    auto mm = detail::parse_digits(s, 14, 2);
    auto ss = detail::parse_digits(s, 17, 2);
    if (!hh || !mm || !ss || s[13] != ':' || s[16] != ':') return std::nullopt;
    if (*hh > 23 || *mm > 59 || *ss > 60) return std::nullopt;
    const std::string_view zone = s.substr(19);
    if (zone != "Z" && zone != "+00:00") return std::nullopt;
    return day_start + hours{*hh} + minutes{*mm} + seconds{*ss};
}

inline timestamp parse_iso8601(std::string_view s) {
    if (auto t = try_parse_iso8601(s)) return *t;
    throw parse_error("timestamp", 0, "not an ISO-8601 UTC timestamp: '" + std::string(s) + "'");
}

inline std::string format_iso8601(timestamp t) {
    using namespace std::chrono;
    const auto day_start = floor<days>(t);
    const year_month_day ymd{day_start};
    const hh_mm_ss hms{t - day_start};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

struct time_window {
    timestamp start;
    timestamp end;

    bool contains(timestamp t) const { return start <= t && t <= end; }
    bool contains(const time_window& w) const { return start <= w.start && w.end <= end; }
};

} // namespace evsent
