#include "kgforage/value.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <system_error>

namespace kgforage {

namespace {

bool digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) {
        return false;
    }
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (s[i] < '0' || s[i] > '9') {
            return false;
        }
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

}  // namespace

// Accepts YYYY-MM-DD and YYYY-MM-DDThh:mm:ss[.fff...](Z|+hh:mm|-hh:mm).
// A leading '+' on the year (Wikidata style) is tolerated.
std::optional<DateTime> DateTime::parse(std::string_view s) {
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    int year = 0;
    int month = 0;
    int day = 0;
    if (s.size() < 10 || !digits(s, 0, 4, year) || s[4] != '-' || !digits(s, 5, 2, month) ||
        s[7] != '-' || !digits(s, 8, 2, day)) {
        return std::nullopt;
    }
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok()) {
        return std::nullopt;
    }
    int hh = 0;
    int mm = 0;
    int ss = 0;
    std::int64_t frac_ms = 0;
    std::int64_t offset_s = 0;
    std::string frac_text;
    std::size_t pos = 10;
    if (pos < s.size()) {
        if (s[pos] != 'T' || !digits(s, pos + 1, 2, hh) || pos + 3 >= s.size() ||
            s[pos + 3] != ':' || !digits(s, pos + 4, 2, mm) || pos + 6 >= s.size() ||
            s[pos + 6] != ':' || !digits(s, pos + 7, 2, ss)) {
            return std::nullopt;
        }
        if (hh > 23 || mm > 59 || ss > 59) {
            return std::nullopt;
        }
        pos += 9;
        if (pos < s.size() && s[pos] == '.') {
            std::size_t start = ++pos;
            while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
                ++pos;
            }
            if (pos == start) {
                return std::nullopt;
            }
            frac_text = std::string(s.substr(start, pos - start));
            std::string ms = frac_text.substr(0, 3);
            while (ms.size() < 3) {
                ms.push_back('0');
            }
            frac_ms = std::stoi(ms);
        }
        if (pos >= s.size()) {
            return std::nullopt;  // a zone designator is required on full timestamps
        }
        if (s[pos] == 'Z') {
            ++pos;
        } else if (s[pos] == '+' || s[pos] == '-') {
            int oh = 0;
            int om = 0;
            if (!digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
                !digits(s, pos + 4, 2, om) || oh > 23 || om > 59) {
                return std::nullopt;
            }
            offset_s = (oh * 3600 + om * 60) * (s[pos] == '+' ? 1 : -1);
            pos += 6;
        } else {
            return std::nullopt;
        }
        if (pos != s.size()) {
            return std::nullopt;
        }
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    const std::int64_t secs =
        static_cast<std::int64_t>(days) * 86400 + hh * 3600 + mm * 60 + ss - offset_s;
    DateTime out;
    out.epoch_ms = secs * 1000 + frac_ms;

    // Canonical text is UTC with a Z designator.
    const auto utc_days = sys_days{std::chrono::days{(secs >= 0 ? secs : secs - 86399) / 86400}};
    const year_month_day u{utc_days};
    std::int64_t rem = secs - static_cast<std::int64_t>(utc_days.time_since_epoch().count()) * 86400;
    std::array<char, 64> buf{};
    std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(u.year()),
                  static_cast<unsigned>(u.month()), static_cast<unsigned>(u.day()),
                  static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60),
                  static_cast<int>(rem % 60));
    out.iso = buf.data();
    if (!frac_text.empty()) {
        out.iso += "." + frac_text;
    }
    out.iso += "Z";
    return out;
}

std::string_view to_string(Datatype t) {
    switch (t) {
        case Datatype::entity:
            return "entity";
        case Datatype::number:
            return "number";
        case Datatype::string:
            return "string";
        case Datatype::datetime:
            return "datetime";
    }
    return "string";
}

std::optional<Datatype> parse_datatype(std::string_view s) {
    if (s == "entity") return Datatype::entity;
    if (s == "number") return Datatype::number;
    if (s == "string") return Datatype::string;
    if (s == "datetime") return Datatype::datetime;
    return std::nullopt;
}

Datatype Value::kind() const {
    switch (v_.index()) {
        case 0:
            return Datatype::entity;
        case 1:
            return Datatype::number;
        case 2:
            return Datatype::string;
        default:
            return Datatype::datetime;
    }
}

std::string Value::render() const {
    switch (v_.index()) {
        case 0:
            return as_entity().id;
        case 1:
            return format_number(as_number());
        case 2:
            return as_text().text;
        default:
            return as_datetime().iso;
    }
}

std::string format_number(double d) {
    if (d == 0.0) {
        return "0";  // also folds -0
    }
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), d);
    if (ec != std::errc{}) {
        return "nan";
    }
    return std::string(buf.data(), ptr);
}

std::optional<double> parse_number(std::string_view s) {
    if (s.empty()) {
        return std::nullopt;
    }
    if (s.front() == '+') {
        s.remove_prefix(1);
        if (s.empty() || s.front() == '-' || s.front() == '+') {
            return std::nullopt;
        }
    }
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

}  // namespace kgforage
