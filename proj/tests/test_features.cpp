#include <doctest.h>

#include <numeric>

#include "itd/error.hpp"
#include "itd/features.hpp"
#include "itd/rng.hpp"

using namespace itd;

namespace {

LogEvent ev(EventKind kind, const std::string& iso, const std::string& pc = "PC-1",
            std::map<std::string, std::string> payload = {}) {
  LogEvent e;
  e.kind = kind;
  e.ts = *parse_iso_datetime(iso);
  e.user = "U1";
  e.pc = pc;
  e.payload = std::move(payload);
  return e;
}

Bucket day_bucket(const std::string& date, std::vector<LogEvent> events) {
  Bucket b;
  b.user = "U1";
  b.granularity = Granularity::Day;
  b.window_start = *parse_iso_datetime(date + "T00:00:00");
  b.window_end = b.window_start + kSecondsPerDay;
  b.events = std::move(events);
  return b;
}

UserProfile profile_pc1() {
  UserProfile p;
  p.user = "U1";
  p.own_pc = "PC-1";
  return p;
}

int component_index(const FeatureCatalog& cat, const std::string& name) {
  for (std::size_t i = 0; i < cat.components.size(); ++i) {
    if (cat.components[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

TEST_SUITE("features.extract") {
  TEST_CASE("dimensions match the granularity table") {
    CHECK(FeatureCatalog::standard(Granularity::Week).dimension() == 40);
    CHECK(FeatureCatalog::standard(Granularity::Day).dimension() == 28);
    CHECK(FeatureCatalog::standard(Granularity::Session).dimension() == 16);
  }

  TEST_CASE("empty day bucket gives a 28-dim zero vector") {
    const auto cat = FeatureCatalog::standard(Granularity::Day);
    const auto v = extract_features(day_bucket("2010-01-04", {}), profile_pc1(), cat);
    REQUIRE(v.values.size() == 28);
    for (double x : v.values) CHECK(x == 0.0);
  }

  TEST_CASE("two workhour logons on the own pc set exactly one component") {
    const auto cat = FeatureCatalog::standard(Granularity::Day);
    const auto v = extract_features(
        day_bucket("2010-01-04", {ev(EventKind::Logon, "2010-01-04T08:30:00"),
                                  ev(EventKind::Logon, "2010-01-04T13:00:00")}),
        profile_pc1(), cat);
    const int idx = component_index(cat, "logon_times_workhour");
    REQUIRE(idx >= 0);
    for (std::size_t i = 0; i < v.values.size(); ++i) {
      CHECK(v.values[i] == (static_cast<int>(i) == idx ? 2.0 : 0.0));
    }
  }

  TEST_CASE("week doc counts split (3 workhour, 0 afterhour, 2 weekend, 5 whole)") {
    // Scripted manifest: 3 workhour doc ops Mon-Wed, 2 weekend doc ops Sat.
    // The oracle recounts them straight from this list.
    struct Planted { const char* iso; bool workhour; bool weekend; };
    const Planted planted[] = {
        {"2010-01-04T09:00:00", true, false},
        {"2010-01-05T10:00:00", true, false},
        {"2010-01-06T16:30:00", true, false},
        {"2010-01-09T11:00:00", false, true},
        {"2010-01-09T12:00:00", false, true},
    };
    std::size_t oracle_workhour = 0, oracle_weekend = 0, oracle_whole = 0;
    for (const auto& p : planted) {
      oracle_workhour += p.workhour;
      oracle_weekend += p.weekend;
      ++oracle_whole;
    }

    Bucket b;
    b.user = "U1";
    b.granularity = Granularity::Week;
    b.window_start = *parse_iso_datetime("2010-01-04T00:00:00");
    b.window_end = b.window_start + 7 * kSecondsPerDay;
    for (const auto& p : planted) {
      b.events.push_back(ev(EventKind::FileOp, p.iso, "PC-1", {{"filename", "budget.doc"}}));
    }

    const auto cat = FeatureCatalog::standard(Granularity::Week);
    const auto v = extract_features(b, profile_pc1(), cat);
    CHECK(v.values[component_index(cat, "doc_oper_times_workhour")] == oracle_workhour);
    CHECK(v.values[component_index(cat, "doc_oper_times_afterhour")] == 0.0);
    CHECK(v.values[component_index(cat, "doc_oper_times_weekend")] == oracle_weekend);
    CHECK(v.values[component_index(cat, "doc_oper_times_whole")] == oracle_whole);
  }

  TEST_CASE("day otherpc components count non-assigned-pc activity") {
    const auto cat = FeatureCatalog::standard(Granularity::Day);
    const auto v = extract_features(
        day_bucket("2010-01-04",
                   {ev(EventKind::Logon, "2010-01-04T09:00:00", "PC-7"),
                    ev(EventKind::FileOp, "2010-01-04T09:30:00", "PC-7",
                       {{"filename", "tool.exe"}}),
                    ev(EventKind::Logon, "2010-01-04T08:00:00", "PC-1")}),
        profile_pc1(), cat);
    CHECK(v.values[component_index(cat, "logon_times_otherpc")] == 1.0);
    CHECK(v.values[component_index(cat, "file_oper_times_otherpc")] == 1.0);
    CHECK(v.values[component_index(cat, "exe_oper_times_otherpc")] == 1.0);
    CHECK(v.values[component_index(cat, "doc_oper_times_otherpc")] == 0.0);
    CHECK(v.values[component_index(cat, "logon_times_workhour")] == 2.0);
  }

  TEST_CASE("categorizer looks only at suffixes and url keywords") {
    Categorizer cats;
    CHECK(cats.is_doc("Budget.DOC"));
    CHECK(cats.is_doc("a.pdf"));
    CHECK_FALSE(cats.is_doc("a.pdf.exe"));
    CHECK(cats.is_exe("setup.exe"));
    CHECK(cats.is_job("http://jobs.example.com/listing"));
    CHECK(cats.is_leak("https://www.wikileaks.org/upload"));
    CHECK_FALSE(cats.is_leak("http://news.example.com"));
  }

  TEST_CASE("email mean attachment size averages per email in frame") {
    const auto cat = FeatureCatalog::standard(Granularity::Day);
    const auto v = extract_features(
        day_bucket("2010-01-04",
                   {ev(EventKind::Email, "2010-01-04T09:00:00", "PC-1",
                       {{"attachment_count", "2"}, {"attachment_total_size_bytes", "1000"}}),
                    ev(EventKind::Email, "2010-01-04T10:00:00", "PC-1",
                       {{"attachment_count", "0"}, {"attachment_total_size_bytes", "0"}})}),
        profile_pc1(), cat);
    CHECK(v.values[component_index(cat, "email_mean_size_atts_workhour")] ==
          doctest::Approx(500.0));
    CHECK(v.values[component_index(cat, "email_oper_times_workhour")] == 2.0);
  }

  TEST_CASE("session vector covers indicators plus session statistics") {
    Bucket b;
    b.user = "U1";
    b.granularity = Granularity::Session;
    b.window_start = *parse_iso_datetime("2010-01-04T19:30:00");
    b.window_end = *parse_iso_datetime("2010-01-04T22:30:00");
    b.pc = "PC-3";
    b.events = {ev(EventKind::Logon, "2010-01-04T19:30:00", "PC-3"),
                ev(EventKind::Http, "2010-01-04T20:00:00", "PC-3",
                   {{"url", "http://www.wikileaks.org/x"}}),
                ev(EventKind::Logoff, "2010-01-04T22:30:00", "PC-3")};
    const auto cat = FeatureCatalog::standard(Granularity::Session);
    const auto v = extract_features(b, profile_pc1(), cat);
    REQUIRE(v.values.size() == 16);
    CHECK(v.values[component_index(cat, "session_duration_hours")] == doctest::Approx(3.0));
    CHECK(v.values[component_index(cat, "start_hour")] == doctest::Approx(19.5));
    CHECK(v.values[component_index(cat, "is_afterhour_start")] == 1.0);
    CHECK(v.values[component_index(cat, "is_weekend")] == 0.0);
    CHECK(v.values[component_index(cat, "is_own_pc")] == 0.0);
    CHECK(v.values[component_index(cat, "n_distinct_pcs")] == 1.0);
    CHECK(v.values[component_index(cat, "leak_oper_times_session")] == 1.0);
  }

  TEST_CASE("granularity mismatch fails with CatalogMismatch") {
    const auto cat = FeatureCatalog::standard(Granularity::Week);
    try {
      extract_features(day_bucket("2010-01-04", {}), profile_pc1(), cat);
      FAIL("expected CatalogMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::CatalogMismatch);
    }
  }

  TEST_CASE("count additivity: whole = workhour + afterhour + weekend") {
    Rng rng(41);
    const auto cat = FeatureCatalog::standard(Granularity::Week);
    for (int trial = 0; trial < 20; ++trial) {
      Bucket b;
      b.user = "U1";
      b.granularity = Granularity::Week;
      b.window_start = *parse_iso_datetime("2010-01-04T00:00:00");
      b.window_end = b.window_start + 7 * kSecondsPerDay;
      const int n = 10 + static_cast<int>(rng.uniform_index(60));
      for (int i = 0; i < n; ++i) {
        const Timestamp ts = b.window_start +
                             static_cast<Timestamp>(rng.uniform_index(7 * kSecondsPerDay));
        const EventKind kinds[] = {EventKind::Logon, EventKind::FileOp, EventKind::Http,
                                   EventKind::Email, EventKind::DeviceConnect};
        LogEvent e = ev(kinds[rng.uniform_index(5)], format_iso_datetime(ts),
                        rng.bernoulli(0.2) ? "PC-9" : "PC-1");
        if (e.kind == EventKind::FileOp) e.payload["filename"] = "a.doc";
        if (e.kind == EventKind::Http) e.payload["url"] = "http://jobs.example.com/";
        if (e.kind == EventKind::Email) {
          e.payload["attachment_count"] = "1";
          e.payload["attachment_total_size_bytes"] = "100";
        }
        b.events.push_back(std::move(e));
      }
      const auto v = extract_features(b, profile_pc1(), cat);
      for (const char* ind :
           {"logon_times", "file_oper_times", "doc_oper_times", "exe_oper_times",
            "http_oper_times", "job_oper_times", "leak_oper_times", "email_oper_times",
            "usb_oper_times"}) {
        const std::string base(ind);
        CHECK(v.values[component_index(cat, base + "_whole")] ==
              doctest::Approx(v.values[component_index(cat, base + "_workhour")] +
                              v.values[component_index(cat, base + "_afterhour")] +
                              v.values[component_index(cat, base + "_weekend")]));
      }
    }
  }

  TEST_CASE("permutation invariance: event order inside a bucket is irrelevant") {
    Rng rng(43);
    const auto cat = FeatureCatalog::standard(Granularity::Day);
    Bucket b = day_bucket("2010-01-04", {});
    for (int i = 0; i < 40; ++i) {
      const Timestamp ts = b.window_start + 8 * 3600 +
                           static_cast<Timestamp>(rng.uniform_index(12 * 3600));
      LogEvent e = ev(rng.bernoulli(0.5) ? EventKind::Http : EventKind::FileOp,
                      format_iso_datetime(ts), rng.bernoulli(0.3) ? "PC-9" : "PC-1");
      if (e.kind == EventKind::FileOp) e.payload["filename"] = "x.txt";
      else e.payload["url"] = "http://a.example/";
      b.events.push_back(std::move(e));
    }
    const auto v1 = extract_features(b, profile_pc1(), cat);
    rng.shuffle(b.events);
    const auto v2 = extract_features(b, profile_pc1(), cat);
    CHECK(v1.values == v2.values);
  }
}

TEST_SUITE("features.normalize") {
  TEST_CASE("min-max mapping with clamp and constant-feature convention") {
    FeatureVector a, b;
    a.values = {0.0, 3.0};
    b.values = {10.0, 3.0};
    const Normalizer n = fit_normalizer({a, b});

    FeatureVector probe;
    probe.values = {5.0, 3.0};
    CHECK(normalize(probe, n).values[0] == doctest::Approx(0.5));
    CHECK(normalize(probe, n).values[1] == 0.0);  // constant feature maps to 0

    probe.values = {12.0, 99.0};
    CHECK(normalize(probe, n).values[0] == 1.0);  // clamped
    CHECK(normalize(probe, n).values[1] == 0.0);

    probe.values = {-3.0, 0.0};
    CHECK(normalize(probe, n).values[0] == 0.0);
  }

  TEST_CASE("empty training set is an error") {
    try {
      fit_normalizer({});
      FAIL("expected EmptyTrainingSet");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyTrainingSet);
    }
  }

  TEST_CASE("normalization is idempotent") {
    Rng rng(51);
    std::vector<FeatureVector> train(20);
    for (auto& v : train) {
      for (int j = 0; j < 6; ++j) v.values.push_back(rng.uniform(0.0, 50.0));
    }
    const Normalizer n = fit_normalizer(train);
    const Normalizer unit = [&] {
      Normalizer u;
      u.min.assign(6, 0.0);
      u.max.assign(6, 1.0);
      return u;
    }();
    for (const auto& v : train) {
      const auto once = normalize(v, n);
      const auto twice = normalize(once, unit);
      for (std::size_t j = 0; j < once.values.size(); ++j) {
        CHECK(twice.values[j] == doctest::Approx(once.values[j]).epsilon(1e-12));
      }
    }
  }
}

TEST_SUITE("features.split") {
  std::vector<FeatureVector> windows(int n) {
    std::vector<FeatureVector> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(i)].window_start = 1000 + i;
      out[static_cast<std::size_t>(i)].values = {static_cast<double>(i)};
    }
    return out;
  }

  TEST_CASE("10 windows at 0.7 give 7 train / 3 test, train strictly earlier") {
    const auto [train, test] = chronological_split(windows(10), 0.7, 1);
    CHECK(train.size() == 7);
    CHECK(test.size() == 3);
    for (const auto& tr : train) {
      for (const auto& te : test) CHECK(tr.window_start < te.window_start);
    }
  }

  TEST_CASE("too small side fails with TooFewInstances") {
    try {
      chronological_split(windows(10), 0.95, 1);
      FAIL("expected TooFewInstances");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TooFewInstances);
    }
    // Default minimum is 10 per side.
    CHECK_THROWS_AS(chronological_split(windows(15), 0.7, 10), Error);
    CHECK_NOTHROW(chronological_split(windows(40), 0.7, 10));
  }

  TEST_CASE("identical timestamps keep stable input order") {
    std::vector<FeatureVector> same(4);
    for (int i = 0; i < 4; ++i) {
      same[static_cast<std::size_t>(i)].window_start = 777;
      same[static_cast<std::size_t>(i)].values = {static_cast<double>(i)};
    }
    const auto [train, test] = chronological_split(same, 0.5, 1);
    REQUIRE(train.size() == 2);
    CHECK(train[0].values[0] == 0.0);
    CHECK(train[1].values[0] == 1.0);
    CHECK(test[0].values[0] == 2.0);
    CHECK(test[1].values[0] == 3.0);
  }
}

TEST_SUITE("features.profile") {
  TEST_CASE("own pc is the modal logon pc with lexicographic ties") {
    std::vector<LogEvent> events;
    auto logon = [&](const char* pc) {
      LogEvent e;
      e.kind = EventKind::Logon;
      e.ts = 0;
      e.user = "U1";
      e.pc = pc;
      events.push_back(e);
    };
    logon("PC-2");
    logon("PC-2");
    logon("PC-1");
    logon("PC-1");
    logon("PC-3");
    CHECK(build_profile("U1", events).own_pc == "PC-1");  // tie 2-2 broken low
    logon("PC-2");
    CHECK(build_profile("U1", events).own_pc == "PC-2");
  }
}
