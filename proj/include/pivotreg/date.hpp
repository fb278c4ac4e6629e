#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace pivotreg {

using Date = std::chrono::sys_days;

// Parses a strict YYYY-MM-DD calendar date. Throws ValidationError on
// malformed text or impossible dates such as 2017-02-30.
Date parse_date(std::string_view text);

std::string format_date(Date d);

inline long day_number(Date d) { return d.time_since_epoch().count(); }

inline Date date_from_day_number(long n) { return Date{std::chrono::days{n}}; }

}  // namespace pivotreg
