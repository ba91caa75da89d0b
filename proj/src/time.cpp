#include "memfix/time.hpp"

#include <cstdio>

namespace memfix {

namespace {

std::optional<unsigned> digits(std::string_view text, std::size_t pos, std::size_t count) {
    if (pos + count > text.size()) return std::nullopt;
    unsigned value = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        char c = text[i];
        if (c < '0' || c > '9') return std::nullopt;
        value = value * 10 + static_cast<unsigned>(c - '0');
    }
    return value;
}

struct Fields {
    int year;
    unsigned month, day, hour, minute, second;
};

Fields split(UtcTime t) {
    using namespace std::chrono;
    auto day_point = floor<days>(t);
    year_month_day ymd{day_point};
    hh_mm_ss hms{t - day_point};
    return {static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
            static_cast<unsigned>(ymd.day()), static_cast<unsigned>(hms.hours().count()),
            static_cast<unsigned>(hms.minutes().count()),
            static_cast<unsigned>(hms.seconds().count())};
}

}  // namespace

UtcTime utc_now() {
    return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

std::optional<UtcTime> make_utc(int year, unsigned month, unsigned day, unsigned hour,
                                unsigned minute, unsigned second) {
    using namespace std::chrono;
    year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    if (!ymd.ok() || hour > 23 || minute > 59 || second > 59) return std::nullopt;
    return sys_days{ymd} + hours{hour} + minutes{minute} + seconds{second};
}

std::optional<UtcTime> parse_timestamp14(std::string_view text) {
    if (text.size() != 14) return std::nullopt;
    auto y = digits(text, 0, 4), mo = digits(text, 4, 2), d = digits(text, 6, 2),
         h = digits(text, 8, 2), mi = digits(text, 10, 2), s = digits(text, 12, 2);
    if (!y || !mo || !d || !h || !mi || !s) return std::nullopt;
    return make_utc(static_cast<int>(*y), *mo, *d, *h, *mi, *s);
}

std::string format_timestamp14(UtcTime t) {
    auto f = split(t);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d%02u%02u%02u%02u%02u", f.year, f.month, f.day, f.hour,
                  f.minute, f.second);
    return buf;
}

std::optional<UtcTime> parse_rfc3339(std::string_view text) {
    // YYYY-MM-DDThh:mm:ssZ
    if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
        text[13] != ':' || text[16] != ':' || text[19] != 'Z')
        return std::nullopt;
    auto y = digits(text, 0, 4), mo = digits(text, 5, 2), d = digits(text, 8, 2),
         h = digits(text, 11, 2), mi = digits(text, 14, 2), s = digits(text, 17, 2);
    if (!y || !mo || !d || !h || !mi || !s) return std::nullopt;
    return make_utc(static_cast<int>(*y), *mo, *d, *h, *mi, *s);
}

std::string format_rfc3339(UtcTime t) {
    auto f = split(t);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02u:%02u:%02uZ", f.year, f.month, f.day,
                  f.hour, f.minute, f.second);
    return buf;
}

}  // namespace memfix
