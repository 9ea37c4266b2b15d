#include "itd/datetime.hpp"

#include <charconv>
#include <cstdio>

namespace itd {

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

}  // namespace

std::int64_t days_from_civil(int y, int m, int d) {
  // Gregorian calendar, proleptic. Era-based civil-from-days algorithm.
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);               // [0, 399]
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;    // [0, 365]
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;              // [0, 146096]
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

CivilTime civil_from_timestamp(Timestamp ts) {
  std::int64_t z = ts / kSecondsPerDay;
  std::int64_t rem = ts % kSecondsPerDay;
  if (rem < 0) {
    rem += kSecondsPerDay;
    z -= 1;
  }
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);

  CivilTime c;
  c.year = static_cast<int>(y + (m <= 2));
  c.month = static_cast<int>(m);
  c.day = static_cast<int>(d);
  c.hour = static_cast<int>(rem / 3600);
  c.minute = static_cast<int>((rem / 60) % 60);
  c.second = static_cast<int>(rem % 60);
  return c;
}

Timestamp timestamp_from_civil(const CivilTime& c) {
  return days_from_civil(c.year, c.month, c.day) * kSecondsPerDay + c.hour * 3600 +
         c.minute * 60 + c.second;
}

std::optional<Timestamp> parse_log_datetime(std::string_view text) {
  // MM/DD/YYYY HH:MM:SS
  const auto slash1 = text.find('/');
  const auto slash2 = text.find('/', slash1 == std::string_view::npos ? 0 : slash1 + 1);
  const auto space = text.find(' ');
  if (slash1 == std::string_view::npos || slash2 == std::string_view::npos ||
      space == std::string_view::npos || space < slash2) {
    return std::nullopt;
  }
  const auto colon1 = text.find(':', space);
  const auto colon2 = text.find(':', colon1 == std::string_view::npos ? 0 : colon1 + 1);
  if (colon1 == std::string_view::npos || colon2 == std::string_view::npos) return std::nullopt;

  CivilTime c;
  if (!parse_int(text.substr(0, slash1), c.month)) return std::nullopt;
  if (!parse_int(text.substr(slash1 + 1, slash2 - slash1 - 1), c.day)) return std::nullopt;
  if (!parse_int(text.substr(slash2 + 1, space - slash2 - 1), c.year)) return std::nullopt;
  if (!parse_int(text.substr(space + 1, colon1 - space - 1), c.hour)) return std::nullopt;
  if (!parse_int(text.substr(colon1 + 1, colon2 - colon1 - 1), c.minute)) return std::nullopt;
  if (!parse_int(text.substr(colon2 + 1), c.second)) return std::nullopt;

  if (c.month < 1 || c.month > 12 || c.day < 1 || c.day > 31) return std::nullopt;
  if (c.hour < 0 || c.hour > 23 || c.minute < 0 || c.minute > 59 || c.second < 0 || c.second > 59)
    return std::nullopt;
  return timestamp_from_civil(c);
}

std::string format_log_datetime(Timestamp ts) {
  const CivilTime c = civil_from_timestamp(ts);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%02d/%02d/%04d %02d:%02d:%02d", c.month, c.day, c.year, c.hour,
                c.minute, c.second);
  return buf;
}

std::optional<Timestamp> parse_iso_datetime(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SS
  if (text.size() != 19 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  CivilTime c;
  if (!parse_int(text.substr(0, 4), c.year)) return std::nullopt;
  if (!parse_int(text.substr(5, 2), c.month)) return std::nullopt;
  if (!parse_int(text.substr(8, 2), c.day)) return std::nullopt;
  if (!parse_int(text.substr(11, 2), c.hour)) return std::nullopt;
  if (!parse_int(text.substr(14, 2), c.minute)) return std::nullopt;
  if (!parse_int(text.substr(17, 2), c.second)) return std::nullopt;
  return timestamp_from_civil(c);
}

std::string format_iso_datetime(Timestamp ts) {
  const CivilTime c = civil_from_timestamp(ts);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", c.year, c.month, c.day, c.hour,
                c.minute, c.second);
  return buf;
}

int weekday_mon0(Timestamp ts) {
  std::int64_t days = ts / kSecondsPerDay;
  if (ts % kSecondsPerDay < 0) days -= 1;
  // 1970-01-01 was a Thursday (index 3 with Monday = 0).
  std::int64_t w = (days + 3) % 7;
  if (w < 0) w += 7;
  return static_cast<int>(w);
}

bool is_weekend(Timestamp ts) { return weekday_mon0(ts) >= 5; }

bool is_workhour(Timestamp ts) {
  if (is_weekend(ts)) return false;
  const CivilTime c = civil_from_timestamp(ts);
  return c.hour >= 8 && c.hour < 18;
}

bool is_afterhour(Timestamp ts) { return !is_weekend(ts) && !is_workhour(ts); }

double hour_of_day(Timestamp ts) {
  const CivilTime c = civil_from_timestamp(ts);
  return c.hour + c.minute / 60.0 + c.second / 3600.0;
}

Timestamp day_start(Timestamp ts) {
  std::int64_t days = ts / kSecondsPerDay;
  if (ts % kSecondsPerDay < 0) days -= 1;
  return days * kSecondsPerDay;
}

Timestamp week_start(Timestamp ts) {
  return day_start(ts) - static_cast<Timestamp>(weekday_mon0(ts)) * kSecondsPerDay;
}

}  // namespace itd
