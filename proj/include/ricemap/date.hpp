#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <string>

#include "ricemap/error.hpp"

namespace ricemap {

// Calendar date, day resolution. Thin wrapper over std::chrono::sys_days so
// arithmetic is plain day counts and serialization is ISO-8601 (YYYY-MM-DD).
class Date {
public:
    Date() = default;
    explicit Date(std::chrono::sys_days d) : days_(d) {}

    static Date from_ymd(int year, unsigned month, unsigned day) {
        std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                        std::chrono::day{day}};
        if (!ymd.ok()) {
            throw validation_error("invalid calendar date: " + std::to_string(year) + "-" +
                                   std::to_string(month) + "-" + std::to_string(day));
        }
        return Date(std::chrono::sys_days{ymd});
    }

    static Date parse(const std::string& iso) {
        int y = 0;
        unsigned m = 0, d = 0;
        char trail = 0;
        if (std::sscanf(iso.c_str(), "%d-%u-%u%c", &y, &m, &d, &trail) != 3) {
            throw validation_error("date not in YYYY-MM-DD form: '" + iso + "'");
        }
        return from_ymd(y, m, d);
    }

    std::string to_string() const {
        const std::chrono::year_month_day ymd{days_};
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()),
                      unsigned(ymd.month()), unsigned(ymd.day()));
        return buf;
    }

    Date plus_days(int n) const { return Date(days_ + std::chrono::days{n}); }

    friend int operator-(Date a, Date b) {
        return int((a.days_ - b.days_).count());
    }
    friend auto operator<=>(Date, Date) = default;

private:
    std::chrono::sys_days days_{};
};

struct DateRange {
    Date start;
    Date end; // inclusive

    bool contains(Date d) const { return start <= d && d <= end; }
    int days() const { return (end - start) + 1; }

    void validate(const std::string& what) const {
        require(start <= end, what + ": start after end (" + start.to_string() + " > " +
                                  end.to_string() + ")");
    }
};

} // namespace ricemap
