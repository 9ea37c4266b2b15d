#include <doctest.h>

#include "itd/csv.hpp"
#include "itd/datetime.hpp"
#include "itd/rng.hpp"

#include <sstream>

using namespace itd;

TEST_SUITE("datetime") {
  TEST_CASE("log format parses and round-trips") {
    const auto ts = parse_log_datetime("01/02/2010 08:01:00");
    REQUIRE(ts.has_value());
    const CivilTime c = civil_from_timestamp(*ts);
    CHECK(c.year == 2010);
    CHECK(c.month == 1);
    CHECK(c.day == 2);
    CHECK(c.hour == 8);
    CHECK(c.minute == 1);
    CHECK(format_log_datetime(*ts) == "01/02/2010 08:01:00");
    CHECK(format_iso_datetime(*ts) == "2010-01-02T08:01:00");
  }

  TEST_CASE("malformed datetimes are rejected") {
    CHECK_FALSE(parse_log_datetime("not a date").has_value());
    CHECK_FALSE(parse_log_datetime("13/45/2010 08:00:00").has_value());
    CHECK_FALSE(parse_log_datetime("01/02/2010").has_value());
    CHECK_FALSE(parse_log_datetime("01/02/2010 27:00:00").has_value());
  }

  TEST_CASE("civil conversions round-trip over a wide range") {
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
      const Timestamp ts = static_cast<Timestamp>(rng.uniform_index(4102444800ull));  // to 2100
      const CivilTime c = civil_from_timestamp(ts);
      CHECK(timestamp_from_civil(c) == ts);
    }
  }

  TEST_CASE("weekday and frame helpers") {
    // 2010-01-04 was a Monday.
    const Timestamp monday = *parse_iso_datetime("2010-01-04T10:00:00");
    CHECK(weekday_mon0(monday) == 0);
    CHECK_FALSE(is_weekend(monday));
    CHECK(is_workhour(monday));
    CHECK_FALSE(is_afterhour(monday));

    const Timestamp monday_evening = *parse_iso_datetime("2010-01-04T19:30:00");
    CHECK_FALSE(is_workhour(monday_evening));
    CHECK(is_afterhour(monday_evening));

    const Timestamp saturday = *parse_iso_datetime("2010-01-09T12:00:00");
    CHECK(is_weekend(saturday));
    CHECK_FALSE(is_workhour(saturday));
    CHECK_FALSE(is_afterhour(saturday));

    // 07:59 and 18:00 sit outside work hours.
    CHECK_FALSE(is_workhour(*parse_iso_datetime("2010-01-04T07:59:59")));
    CHECK(is_workhour(*parse_iso_datetime("2010-01-04T17:59:59")));
    CHECK_FALSE(is_workhour(*parse_iso_datetime("2010-01-04T18:00:00")));
  }

  TEST_CASE("week anchor is Monday") {
    const Timestamp wednesday = *parse_iso_datetime("2010-01-06T15:00:00");
    CHECK(format_iso_datetime(week_start(wednesday)) == "2010-01-04T00:00:00");
    CHECK(format_iso_datetime(day_start(wednesday)) == "2010-01-06T00:00:00");
    const Timestamp sunday = *parse_iso_datetime("2010-01-10T23:59:59");
    CHECK(format_iso_datetime(week_start(sunday)) == "2010-01-04T00:00:00");
  }
}

TEST_SUITE("csv") {
  TEST_CASE("split handles quotes and escaped quotes") {
    const auto fields = split_csv_line(R"(a,"b,c",d,"say ""hi""",)");
    REQUIRE(fields.size() == 5);
    CHECK(fields[0] == "a");
    CHECK(fields[1] == "b,c");
    CHECK(fields[2] == "d");
    CHECK(fields[3] == "say \"hi\"");
    CHECK(fields[4].empty());
  }

  TEST_CASE("escape round-trips through split") {
    Rng rng(3);
    const std::string alphabet = "ab,\"x\n 9";
    for (int i = 0; i < 200; ++i) {
      std::vector<std::string> fields;
      for (int f = 0; f < 4; ++f) {
        std::string s;
        const auto len = rng.uniform_index(6);
        for (std::size_t c = 0; c < len; ++c) {
          char ch = alphabet[rng.uniform_index(alphabet.size())];
          if (ch == '\n') ch = ' ';  // single-line reader contract
          s.push_back(ch);
        }
        fields.push_back(std::move(s));
      }
      CHECK(split_csv_line(join_csv_row(fields)) == fields);
    }
  }

  TEST_CASE("reader maps header columns") {
    std::istringstream in("id,date,user\n1,x,alice\n\n2,y,bob\n");
    CsvReader reader(in);
    REQUIRE(reader.has_header());
    CHECK(reader.column_index("user") == 2);
    CHECK(reader.column_index("missing") == -1);
    std::vector<std::string> row;
    REQUIRE(reader.next_row(row));
    CHECK(row[2] == "alice");
    REQUIRE(reader.next_row(row));  // blank line skipped
    CHECK(row[2] == "bob");
    CHECK_FALSE(reader.next_row(row));
  }
}
