#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace itd {

// Timestamps are naive local seconds since 1970-01-01 00:00:00. The audit logs
// carry no timezone, so no conversion is ever applied.
using Timestamp = std::int64_t;

struct CivilTime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;
  int minute = 0;
  int second = 0;
};

std::int64_t days_from_civil(int year, int month, int day);
CivilTime civil_from_timestamp(Timestamp ts);
Timestamp timestamp_from_civil(const CivilTime& c);

// "MM/DD/YYYY HH:MM:SS" (audit-log format).
std::optional<Timestamp> parse_log_datetime(std::string_view text);
std::string format_log_datetime(Timestamp ts);

// "YYYY-MM-DDTHH:MM:SS" for persisted artifacts.
std::optional<Timestamp> parse_iso_datetime(std::string_view text);
std::string format_iso_datetime(Timestamp ts);

// 0 = Monday ... 6 = Sunday.
int weekday_mon0(Timestamp ts);
bool is_weekend(Timestamp ts);
// Weekday 08:00-17:59.
bool is_workhour(Timestamp ts);
// Weekday outside work hours.
bool is_afterhour(Timestamp ts);
double hour_of_day(Timestamp ts);

Timestamp day_start(Timestamp ts);
// Monday 00:00 of the week containing ts.
Timestamp week_start(Timestamp ts);

constexpr Timestamp kSecondsPerDay = 86400;

}  // namespace itd
