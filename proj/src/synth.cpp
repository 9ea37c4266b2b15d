#include "itd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "itd/error.hpp"
#include "itd/events.hpp"
#include "itd/ingest.hpp"
#include "itd/rng.hpp"

namespace fs = std::filesystem;

namespace itd {

const char* scenario_kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::DataExfiltration: return "data-exfiltration";
    case ScenarioKind::Masquerade: return "masquerade";
    case ScenarioKind::JobHunting: return "job-hunting";
  }
  return "data-exfiltration";
}

ScenarioKind scenario_kind_from_name(const std::string& name) {
  if (name == "data-exfiltration") return ScenarioKind::DataExfiltration;
  if (name == "masquerade") return ScenarioKind::Masquerade;
  if (name == "job-hunting") return ScenarioKind::JobHunting;
  fail(ErrorKind::InvalidPlan, "unknown scenario kind '" + name + "'");
}

ScenarioPlan ScenarioPlan::default_plan() {
  ScenarioPlan plan;
  // Two malicious users, planted deep in the test tail, six burst days each.
  plan.scenarios.push_back({5, 96, 112, ScenarioKind::DataExfiltration});
  plan.scenarios.push_back({13, 98, 114, ScenarioKind::Masquerade});
  return plan;
}

namespace {

std::string user_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "U%03d", i);
  return buf;
}

std::string pc_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "PC-%03d", i);
  return buf;
}

const char* kNormalSites[] = {"portal.dtaa-intra.com", "news.example.com", "mail.example.com",
                              "docs.example.com", "weather.example.com", "wiki.dtaa-intra.com"};
const char* kJobSites[] = {"www.careerbuilder.example", "jobs.example.com",
                           "www.hireme.example"};
const char* kLeakSites[] = {"www.wikileaks.org"};
const char* kDocNames[] = {"report", "budget", "minutes", "notes", "plan", "summary"};
const char* kDocExts[] = {".doc", ".docx", ".pdf", ".txt"};
const char* kExeNames[] = {"setup", "tool", "patch"};
const char* kOtherExts[] = {".csv", ".xls", ".png"};

struct DayContext {
  std::vector<LogEvent>* events;
  std::string user;
  std::string pc;
  Rng* rng;
};

Timestamp jitter_ts(Rng& rng, Timestamp base, int spread_minutes) {
  return base + static_cast<Timestamp>(rng.uniform_int(-spread_minutes * 60, spread_minutes * 60));
}

Timestamp uniform_ts(Rng& rng, Timestamp lo, Timestamp hi) {
  if (hi <= lo) return lo;
  return lo + static_cast<Timestamp>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo)));
}

void add_event(DayContext& ctx, EventKind kind, Timestamp ts,
               std::map<std::string, std::string> payload = {}) {
  LogEvent ev;
  ev.kind = kind;
  ev.ts = ts;
  ev.user = ctx.user;
  ev.pc = ctx.pc;
  ev.payload = std::move(payload);
  ctx.events->push_back(std::move(ev));
}

std::string random_file(Rng& rng, double doc_share, double exe_share) {
  const double roll = rng.uniform();
  if (roll < doc_share) {
    return std::string(kDocNames[rng.uniform_index(std::size(kDocNames))]) +
           std::to_string(rng.uniform_int(1, 99)) + kDocExts[rng.uniform_index(std::size(kDocExts))];
  }
  if (roll < doc_share + exe_share) {
    return std::string(kExeNames[rng.uniform_index(std::size(kExeNames))]) +
           std::to_string(rng.uniform_int(1, 20)) + ".exe";
  }
  return std::string("data") + std::to_string(rng.uniform_int(1, 99)) +
         kOtherExts[rng.uniform_index(std::size(kOtherExts))];
}

std::string random_url(Rng& rng, double job_p, double leak_p) {
  const double roll = rng.uniform();
  const char* site;
  if (roll < leak_p) site = kLeakSites[rng.uniform_index(std::size(kLeakSites))];
  else if (roll < leak_p + job_p) site = kJobSites[rng.uniform_index(std::size(kJobSites))];
  else site = kNormalSites[rng.uniform_index(std::size(kNormalSites))];
  return std::string("http://") + site + "/page" + std::to_string(rng.uniform_int(1, 500));
}

std::string random_attachments(Rng& rng, int count, long mean_bytes) {
  std::string out;
  for (int i = 0; i < count; ++i) {
    if (i) out += ";";
    const long bytes = std::max<long>(
        1024, static_cast<long>(mean_bytes * (0.4 + 1.2 * rng.uniform())));
    out += std::string(kDocNames[rng.uniform_index(std::size(kDocNames))]) +
           std::to_string(rng.uniform_int(1, 99)) +
           kDocExts[rng.uniform_index(std::size(kDocExts))] + "(" + std::to_string(bytes) + ")";
  }
  return out;
}

struct UserTraits {
  double doc_share = 0.55;
  double exe_share = 0.08;
  double att_rate = 0.8;     // attachments per email
  long att_bytes = 180000;   // typical attachment size
};

void emit_activity_block(DayContext& ctx, Timestamp lo, Timestamp hi, double m, Rng& rng,
                         const UserTraits& traits, double http_rate, double file_rate,
                         double email_rate, double usb_rate, double job_p, double leak_p) {
  const int n_http = rng.poisson(http_rate * m);
  for (int i = 0; i < n_http; ++i) {
    add_event(ctx, EventKind::Http, uniform_ts(rng, lo, hi),
              {{"url", random_url(rng, job_p, leak_p)}});
  }
  const int n_file = rng.poisson(file_rate * m);
  for (int i = 0; i < n_file; ++i) {
    add_event(ctx, EventKind::FileOp, uniform_ts(rng, lo, hi),
              {{"filename", random_file(rng, traits.doc_share, traits.exe_share)}});
  }
  const int n_email = rng.poisson(email_rate * m);
  for (int i = 0; i < n_email; ++i) {
    const int atts = rng.poisson(traits.att_rate);
    const long mean_bytes = rng.bernoulli(0.03) ? traits.att_bytes * 5 : traits.att_bytes;
    const std::string att_field = atts > 0 ? random_attachments(rng, atts, mean_bytes) : "";
    std::map<std::string, std::string> payload = {
        {"to", user_id(rng.uniform_int(0, 40)) + "@dtaa.example"},
        {"from", ctx.user + "@dtaa.example"},
        {"size", std::to_string(rng.uniform_int(900, 9000))}};
    if (!att_field.empty()) payload["attachments"] = att_field;
    add_event(ctx, EventKind::Email, uniform_ts(rng, lo, hi), std::move(payload));
  }
  if (rng.bernoulli(usb_rate * m)) {
    const Timestamp t = uniform_ts(rng, lo, hi - 600);
    add_event(ctx, EventKind::DeviceConnect, t);
    add_event(ctx, EventKind::DeviceDisconnect, t + rng.uniform_int(120, 600));
  }
}

}  // namespace

SynthResult synth_generate(const ScenarioPlan& plan, std::uint64_t seed,
                           const std::string& out_dir) {
  if (plan.n_users < 2) fail(ErrorKind::InvalidPlan, "need at least 2 users");
  if (plan.n_days < 14) fail(ErrorKind::InvalidPlan, "need at least 14 days");
  std::set<int> malicious_users;
  for (const PlantedScenario& sc : plan.scenarios) {
    if (sc.user_index < 0 || sc.user_index >= plan.n_users) {
      fail(ErrorKind::InvalidPlan, "scenario user index out of range");
    }
    if (sc.day_begin > sc.day_end || sc.day_end >= plan.n_days) {
      fail(ErrorKind::InvalidPlan, "scenario day range out of bounds");
    }
    const int test_start = static_cast<int>(
        std::ceil(plan.train_fraction * static_cast<double>(plan.n_days)));
    if (sc.day_begin < test_start) {
      fail(ErrorKind::InvalidPlan, "planted scenarios must fall in the test period (day >= " +
                                       std::to_string(test_start) + ")");
    }
    malicious_users.insert(sc.user_index);
  }
  if (malicious_users.size() * 10 > static_cast<std::size_t>(plan.n_users)) {
    fail(ErrorKind::InvalidPlan, "malicious users must be at most 10% of users");
  }

  fs::create_directories(out_dir);

  std::vector<LogEvent> events;
  std::vector<double> rates(static_cast<std::size_t>(plan.n_users));
  nlohmann::json malicious_windows = nlohmann::json::array();
  std::map<int, std::vector<std::string>> scenario_days;

  // Workdays follow one of three archetypes: hands-on project work,
  // correspondence-heavy days and research/browsing days. Every indicator's
  // normal range is wide because of the mode mix; what stays stable per user
  // is which activities co-occur, which is exactly what the planted
  // scenarios violate.
  struct DayRates {
    double http, file, email, usb;
  };
  static constexpr DayRates kArchetypes[3] = {
      {5.0, 9.0, 1.5, 0.40},   // project day
      {6.0, 1.5, 8.0, 0.10},   // correspondence day
      {20.0, 2.0, 2.5, 0.10},  // research day
  };

  for (int u = 0; u < plan.n_users; ++u) {
    const std::string user = user_id(u);
    Rng rng(Rng::mix(seed, Rng::hash_str(user)));
    const double m = rng.uniform(plan.rate_multiplier_lo, plan.rate_multiplier_hi);
    rates[static_cast<std::size_t>(u)] = m;

    // User-specific archetype mix and traits. The mix stays close to uniform
    // so each mode shows up often enough to be learnable from one user's
    // training period, while the traits spread users far apart for any model
    // that has to cover all of them at once.
    double arch_weights[3];
    double weight_sum = 0.0;
    for (double& w : arch_weights) {
      w = 0.8 + 0.4 * rng.uniform();
      weight_sum += w;
    }
    for (double& w : arch_weights) w /= weight_sum;
    const double job_p = rng.bernoulli(0.2) ? 0.05 : 0.01;  // some users browse job ads
    UserTraits traits;
    traits.doc_share = rng.uniform(0.3, 0.8);
    traits.exe_share = rng.uniform(0.03, 0.15);
    traits.att_rate = rng.uniform(0.3, 1.6);
    traits.att_bytes = 80000 + static_cast<long>(rng.uniform_index(300000));
    // Population roles. Floaters work across machines every day; night owls
    // run late shifts with drive backups. Their routine days look exactly
    // like the planted scenarios do on a desk worker's account, so nothing
    // about a scenario day is unusual for the population as a whole.
    const double role_roll = rng.uniform();
    const bool is_floater = role_roll < 0.15;
    const bool is_night_owl = !is_floater && role_roll < 0.30;

    auto pick_archetype = [&]() {
      const double roll = rng.uniform();
      if (roll < arch_weights[0]) return 0;
      if (roll < arch_weights[0] + arch_weights[1]) return 1;
      return 2;
    };

    std::vector<const PlantedScenario*> my_scenarios;
    for (const PlantedScenario& sc : plan.scenarios) {
      if (sc.user_index == u) my_scenarios.push_back(&sc);
    }

    for (int day = 0; day < plan.n_days; ++day) {
      const Timestamp day_ts = plan.start_ts + static_cast<Timestamp>(day) * kSecondsPerDay;
      const bool weekend = is_weekend(day_ts);
      DayContext ctx{&events, user, pc_id(u), &rng};

      bool scenario_today = false;
      ScenarioKind today_kind{};
      for (const PlantedScenario* sc : my_scenarios) {
        // Burst on alternating days of the scenario span.
        if (day >= sc->day_begin && day <= sc->day_end && (day - sc->day_begin) % 2 == 0) {
          scenario_today = true;
          today_kind = sc->kind;
        }
      }

      if (scenario_today && !weekend) {
        // A scenario day restructures the whole day rather than piling volume
        // on top of it: totals stay near normal, the pattern does not.
        scenario_days[u].push_back(format_iso_datetime(day_ts).substr(0, 10));
        nlohmann::json w;
        w["user"] = user;
        w["date"] = format_iso_datetime(day_ts).substr(0, 10);
        w["kind"] = scenario_kind_name(today_kind);
        malicious_windows.push_back(std::move(w));

        switch (today_kind) {
          case ScenarioKind::DataExfiltration: {
            // No daytime presence at all; the machine wakes up late at night
            // to stage documents onto a drive and upload them. Volumes stay
            // near normal evening levels, the hour and mix do not.
            const Timestamp night_logon = jitter_ts(rng, day_ts + 20 * 3600 + 2700, 20);
            const Timestamp night_logoff = jitter_ts(rng, day_ts + 23 * 3600 + 900, 15);
            add_event(ctx, EventKind::Logon, night_logon);
            {
              const Timestamp t = uniform_ts(rng, night_logon + 300, night_logoff - 1500);
              add_event(ctx, EventKind::DeviceConnect, t);
              add_event(ctx, EventKind::DeviceDisconnect, t + rng.uniform_int(600, 1200));
            }
            const int files = rng.uniform_int(4, 7);
            for (int f = 0; f < files; ++f) {
              add_event(ctx, EventKind::FileOp,
                        uniform_ts(rng, night_logon + 300, night_logoff - 300),
                        {{"filename", random_file(rng, 0.9, 0.05)}});
            }
            const int leaks = rng.uniform_int(2, 3);
            for (int l = 0; l < leaks; ++l) {
              add_event(ctx, EventKind::Http,
                        uniform_ts(rng, night_logon + 300, night_logoff - 300),
                        {{"url", random_url(rng, 0.0, 1.0)}});
            }
            const int cover = rng.poisson(2.0);
            for (int h = 0; h < cover; ++h) {
              add_event(ctx, EventKind::Http,
                        uniform_ts(rng, night_logon + 300, night_logoff - 300),
                        {{"url", random_url(rng, 0.0, 0.0)}});
            }
            add_event(ctx, EventKind::Email,
                      uniform_ts(rng, night_logon + 600, night_logoff - 600),
                      {{"to", "drop@external.example"},
                       {"from", user + "@dtaa.example"},
                       {"size", "9000"},
                       {"attachments", random_attachments(rng, rng.uniform_int(2, 3), 500000)}});
            add_event(ctx, EventKind::Logoff, night_logoff);
            break;
          }
          case ScenarioKind::Masquerade: {
            // An ordinary-looking workday, except nearly all of it happens on
            // machines that are not the assigned one, doing hands-on work.
            const DayRates& ar = kArchetypes[rng.bernoulli(0.5) ? 0 : 2];
            const Timestamp own_logon = jitter_ts(rng, day_ts + 8 * 3600 + 1800, 20);
            add_event(ctx, EventKind::Logon, own_logon);
            emit_activity_block(ctx, own_logon + 120, own_logon + 2400, m * 0.15, rng, traits,
                                ar.http, ar.file, ar.email, 0.0,
                                /*job_p=*/job_p, /*leak_p=*/0.0);
            add_event(ctx, EventKind::Logoff, own_logon + rng.uniform_int(2700, 3600));

            for (int v = 0; v < 2; ++v) {
              DayContext other_ctx{&events, user,
                                   pc_id((u + 3 + 5 * v) % plan.n_users), &rng};
              const Timestamp visit =
                  jitter_ts(rng, day_ts + (10 + 4 * v) * 3600, 30);
              const Timestamp leave = visit + rng.uniform_int(9000, 12600);
              add_event(other_ctx, EventKind::Logon, visit);
              emit_activity_block(other_ctx, visit + 120, leave - 300, m * 0.45, rng, traits,
                                  ar.http, ar.file, ar.email, ar.usb,
                                  /*job_p=*/job_p, /*leak_p=*/0.008);
              add_event(other_ctx, EventKind::Logoff, leave);
            }
            break;
          }
          case ScenarioKind::JobHunting: {
            // Ordinary day except a slice of the browsing goes to job sites,
            // during work hours and in an evening session.
            const DayRates& ar = kArchetypes[pick_archetype()];
            const Timestamp logon = jitter_ts(rng, day_ts + 8 * 3600, 25);
            const Timestamp logoff = jitter_ts(rng, day_ts + 20 * 3600, 20);
            add_event(ctx, EventKind::Logon, logon);
            emit_activity_block(ctx, logon + 300, day_ts + 17 * 3600 + 1800, m * 0.8, rng, traits,
                                ar.http, ar.file, ar.email, ar.usb,
                                /*job_p=*/0.01, /*leak_p=*/0.004);
            const int day_visits = rng.uniform_int(4, 7);
            for (int v = 0; v < day_visits; ++v) {
              add_event(ctx, EventKind::Http,
                        uniform_ts(rng, logon + 600, day_ts + 17 * 3600),
                        {{"url", random_url(rng, 1.0, 0.0)}});
            }
            const int evening_visits = rng.uniform_int(3, 6);
            for (int v = 0; v < evening_visits; ++v) {
              add_event(ctx, EventKind::Http,
                        uniform_ts(rng, day_ts + 18 * 3600, logoff - 600),
                        {{"url", random_url(rng, 1.0, 0.0)}});
            }
            add_event(ctx, EventKind::Logoff, logoff);
            break;
          }
        }
        continue;
      }

      if (!weekend) {
        // Workday: logon about 08:00, logoff about 17:15, activity between.
        // Occasional benign crunch days run hot on every indicator and the
        // odd half-day runs nearly cold; volume alone is not a threat signal.
        const DayRates& ar = kArchetypes[pick_archetype()];
        if (is_night_owl) {
          // Late shift: afternoon start, heavy evening, routine drive backup.
          const Timestamp logon = jitter_ts(rng, day_ts + 13 * 3600, 40);
          const Timestamp logoff = jitter_ts(rng, day_ts + 22 * 3600 + 1800, 40);
          add_event(ctx, EventKind::Logon, logon);
          emit_activity_block(ctx, logon + 300, day_ts + 18 * 3600, m * 0.5, rng, traits,
                              ar.http, ar.file, ar.email, 0.1,
                              /*job_p=*/job_p, /*leak_p=*/0.008);
          emit_activity_block(ctx, day_ts + 18 * 3600, logoff - 300, m, rng, traits,
                              ar.http, ar.file, ar.email, /*usb=*/0.5,
                              /*job_p=*/job_p, /*leak_p=*/0.008);
          add_event(ctx, EventKind::Logoff, logoff);
          continue;
        }
        if (is_floater) {
          // Support role: the whole day is spent on other people's machines.
          const Timestamp own_logon = jitter_ts(rng, day_ts + 8 * 3600 + 900, 20);
          add_event(ctx, EventKind::Logon, own_logon);
          emit_activity_block(ctx, own_logon + 120, own_logon + 2400, m * 0.2, rng, traits,
                              ar.http, ar.file, ar.email, 0.0,
                              /*job_p=*/job_p, /*leak_p=*/0.0);
          add_event(ctx, EventKind::Logoff, own_logon + rng.uniform_int(2700, 3600));
          const int hops = rng.uniform_int(1, 2);
          for (int v = 0; v <= hops; ++v) {
            DayContext other_ctx{&events, user,
                                 pc_id(rng.uniform_int(0, plan.n_users - 1)), &rng};
            if (other_ctx.pc == ctx.pc) other_ctx.pc = pc_id((u + 2 + v) % plan.n_users);
            const Timestamp visit =
                jitter_ts(rng, day_ts + (10 + 4 * v) * 3600 + 1800, 40);
            const Timestamp leave = visit + rng.uniform_int(7200, 12600);
            add_event(other_ctx, EventKind::Logon, visit);
            emit_activity_block(other_ctx, visit + 120, leave - 300, m * 0.45, rng, traits,
                                ar.http, ar.file, ar.email, 0.1,
                                /*job_p=*/job_p, /*leak_p=*/0.004);
            add_event(other_ctx, EventKind::Logoff, leave);
          }
          continue;
        }
        if (rng.bernoulli(0.08)) {
          // Half day.
          const Timestamp logon = jitter_ts(rng, day_ts + 8 * 3600, 25);
          const Timestamp logoff = jitter_ts(rng, day_ts + 13 * 3600, 45);
          add_event(ctx, EventKind::Logon, logon);
          emit_activity_block(ctx, logon + 300, logoff - 300, m * 0.5, rng, traits,
                              ar.http, ar.file, ar.email, ar.usb,
                              /*job_p=*/job_p, /*leak_p=*/0.008);
          add_event(ctx, EventKind::Logoff, logoff);
          continue;
        }
        if (rng.bernoulli(0.06)) {
          // Evening-only remote catch-up: an absent daytime is not by itself
          // suspicious.
          const Timestamp logon = jitter_ts(rng, day_ts + 18 * 3600 + 1800, 40);
          const Timestamp logoff = logon + rng.uniform_int(2 * 3600, 4 * 3600);
          add_event(ctx, EventKind::Logon, logon);
          emit_activity_block(ctx, logon + 300, logoff - 300, m * 0.5, rng, traits,
                              ar.http, ar.file, ar.email, 0.05,
                              /*job_p=*/job_p, /*leak_p=*/0.01);
          add_event(ctx, EventKind::Logoff, logoff);
          continue;
        }
        const bool busy = rng.bernoulli(0.08);
        const double day_m = busy ? m * 2.2 : m;
        const Timestamp logon = jitter_ts(rng, day_ts + 8 * 3600, 25);
        Timestamp logoff = jitter_ts(rng, day_ts + 17 * 3600 + 900, 40);
        const bool stays_late = busy || rng.bernoulli(0.30);
        if (stays_late) logoff = jitter_ts(rng, day_ts + 19 * 3600 + 1800, 30);

        add_event(ctx, EventKind::Logon, logon);
        emit_activity_block(ctx, logon + 300, day_ts + 17 * 3600 + 1800, day_m, rng, traits,
                            ar.http, ar.file, ar.email, ar.usb,
                            /*job_p=*/job_p, /*leak_p=*/0.008);
        if (stays_late) {
          // Evening activity keeps after-hour features from degenerating, and
          // the occasional crunch evening runs hot enough that late volume by
          // itself is unremarkable.
          const double evening_m = rng.bernoulli(0.35) ? day_m * 0.9 : day_m * 0.3;
          emit_activity_block(ctx, day_ts + 18 * 3600, logoff - 300, evening_m, rng, traits,
                              ar.http, ar.file, ar.email, ar.usb,
                              /*job_p=*/job_p, /*leak_p=*/0.01);
        }
        add_event(ctx, EventKind::Logoff, logoff);

        // Occasional visits to colleagues' machines: quick drop-ins and the
        // odd pairing session, always at a light fixed profile.
        if (rng.bernoulli(0.08)) {
          DayContext other_ctx{&events, user,
                               pc_id(rng.uniform_int(0, plan.n_users - 1)), &rng};
          if (other_ctx.pc == ctx.pc) other_ctx.pc = pc_id((u + 1) % plan.n_users);
          const bool pairing = rng.bernoulli(0.3);
          const Timestamp visit = jitter_ts(rng, day_ts + 14 * 3600, 90);
          const Timestamp leave =
              visit + (pairing ? rng.uniform_int(7200, 10800) : rng.uniform_int(1800, 3600));
          add_event(other_ctx, EventKind::Logon, visit);
          emit_activity_block(other_ctx, visit + 60, leave - 300, pairing ? m : m * 0.4, rng, traits,
                              /*http=*/2.0, /*file=*/1.0, /*email=*/0.3, /*usb=*/0.1,
                              /*job_p=*/job_p, /*leak_p=*/0.0);
          add_event(other_ctx, EventKind::Logoff, leave);
        }
      }
    }
  }

  std::stable_sort(events.begin(), events.end(),
                   [](const LogEvent& a, const LogEvent& b) { return a.ts < b.ts; });

  // Per-user per-kind counts: the oracle the ingest round-trip is checked against.
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const LogEvent& ev : events) ++counts[ev.user][event_kind_name(ev.kind)];

  // Split into the five source files, assigning ids in emission order.
  struct Sink {
    std::ofstream stream;
    std::size_t next_id = 1;
    std::string prefix;
  };
  std::map<SourceKind, Sink> sinks;
  auto open_sink = [&](SourceKind kind, const std::string& name, const std::string& header,
                       const std::string& prefix) {
    Sink sink;
    sink.stream.open(fs::path(out_dir) / name);
    sink.stream << header << "\n";
    sink.prefix = prefix;
    sinks[kind] = std::move(sink);
    return fs::path(out_dir) / name;
  };

  SynthResult result;
  result.csv_paths.push_back(open_sink(SourceKind::Logon, "logon.csv",
                                       "id,date,user,pc,activity", "L").string());
  result.csv_paths.push_back(open_sink(SourceKind::Device, "device.csv",
                                       "id,date,user,pc,activity", "D").string());
  result.csv_paths.push_back(open_sink(SourceKind::File, "file.csv",
                                       "id,date,user,pc,filename,content", "F").string());
  result.csv_paths.push_back(open_sink(SourceKind::Email, "email.csv",
                                       "id,date,user,pc,to,cc,bcc,from,size,attachments,content",
                                       "E").string());
  result.csv_paths.push_back(open_sink(SourceKind::Http, "http.csv",
                                       "id,date,user,pc,url,content", "H").string());

  for (LogEvent& ev : events) {
    Sink& sink = sinks[source_for_event(ev.kind)];
    char idbuf[24];
    std::snprintf(idbuf, sizeof(idbuf), "{%s-%07zu}", sink.prefix.c_str(), sink.next_id++);
    ev.payload["id"] = idbuf;
    sink.stream << serialize_event_row(ev) << "\n";
  }
  for (auto& [kind, sink] : sinks) sink.stream.close();

  nlohmann::json manifest;
  manifest["seed"] = seed;
  nlohmann::json plan_json;
  plan_json["n_users"] = plan.n_users;
  plan_json["n_days"] = plan.n_days;
  plan_json["start"] = format_iso_datetime(plan.start_ts);
  plan_json["train_fraction"] = plan.train_fraction;
  manifest["plan"] = std::move(plan_json);

  nlohmann::json users = nlohmann::json::array();
  for (int u = 0; u < plan.n_users; ++u) {
    nlohmann::json j;
    j["user"] = user_id(u);
    j["own_pc"] = pc_id(u);
    j["rate_multiplier"] = rates[static_cast<std::size_t>(u)];
    users.push_back(std::move(j));
  }
  manifest["users"] = std::move(users);

  nlohmann::json mal_users = nlohmann::json::array();
  for (const PlantedScenario& sc : plan.scenarios) {
    nlohmann::json j;
    j["user"] = user_id(sc.user_index);
    j["kind"] = scenario_kind_name(sc.kind);
    j["days"] = scenario_days[sc.user_index];
    mal_users.push_back(std::move(j));
  }
  manifest["malicious_users"] = std::move(mal_users);
  manifest["malicious_windows"] = std::move(malicious_windows);
  manifest["event_counts"] = counts;
  manifest["total_events"] = events.size();

  const fs::path manifest_path = fs::path(out_dir) / "truth.json";
  std::ofstream mf(manifest_path);
  mf << manifest.dump(2) << "\n";
  result.manifest_path = manifest_path.string();
  result.total_events = events.size();
  return result;
}

}  // namespace itd
