#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "itd/csv.hpp"
#include "itd/error.hpp"
#include "itd/features.hpp"
#include "itd/ingest.hpp"
#include "itd/pipeline.hpp"
#include "itd/synth.hpp"
#include "itd/util.hpp"

namespace fs = std::filesystem;
using namespace itd;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("itd_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

ScenarioPlan small_plan() {
  ScenarioPlan plan;
  plan.n_users = 10;
  plan.n_days = 60;
  plan.scenarios = {{2, 46, 56, ScenarioKind::DataExfiltration}};
  return plan;
}

ScenarioPlan two_scenario_plan() {
  ScenarioPlan plan;
  plan.n_users = 20;
  plan.n_days = 70;
  plan.scenarios = {{2, 52, 62, ScenarioKind::DataExfiltration},
                    {7, 53, 63, ScenarioKind::Masquerade}};
  return plan;
}

RunConfig small_config(const std::string& data_dir, const std::string& out_dir) {
  RunConfig cfg;
  cfg.data_dir = data_dir;
  cfg.out_dir = out_dir;
  cfg.granularity = Granularity::Day;
  cfg.transform_policy = "explicit";
  // identity, shifts, rotation, flip: a small but non-trivial working set.
  cfg.explicit_transforms = {0, 4, 12, 16, 40, 76};
  cfg.prune_transforms = true;
  cfg.epochs = 6;
  cfg.seed = 4242;
  return cfg;
}

std::vector<LogEvent> ingest_dir(const std::string& dir) {
  std::vector<LogEvent> events;
  const std::pair<SourceKind, const char*> sources[] = {
      {SourceKind::Logon, "logon.csv"},  {SourceKind::Device, "device.csv"},
      {SourceKind::File, "file.csv"},    {SourceKind::Email, "email.csv"},
      {SourceKind::Http, "http.csv"},
  };
  for (const auto& [kind, name] : sources) {
    std::ifstream in(fs::path(dir) / name);
    REQUIRE(in.good());
    auto parsed = parse_events(kind, ColumnMap::defaults(kind), in);
    events.insert(events.end(), parsed.begin(), parsed.end());
  }
  return events;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("corpus has five csvs, a manifest, and the planted users") {
    TempDir dir("synth_basic");
    const auto result = synth_generate(small_plan(), 7, dir.str());
    CHECK(result.csv_paths.size() == 5);
    for (const auto& p : result.csv_paths) CHECK(fs::exists(p));
    REQUIRE(fs::exists(result.manifest_path));

    const auto manifest = nlohmann::json::parse(read_file(result.manifest_path));
    CHECK(manifest.at("malicious_users").size() == 1);
    CHECK(manifest.at("total_events").get<std::size_t>() == result.total_events);
    CHECK(result.total_events > 1000);
  }

  TEST_CASE("same seed reproduces the corpus byte for byte") {
    TempDir a("synth_det_a"), b("synth_det_b"), c("synth_det_c");
    synth_generate(small_plan(), 7, a.str());
    synth_generate(small_plan(), 7, b.str());
    synth_generate(small_plan(), 8, c.str());
    bool any_diff = false;
    for (const char* name : {"logon.csv", "device.csv", "file.csv", "email.csv", "http.csv",
                             "truth.json"}) {
      CHECK(read_file((a.path / name).string()) == read_file((b.path / name).string()));
      any_diff |= read_file((a.path / name).string()) != read_file((c.path / name).string());
    }
    CHECK(any_diff);
  }

  TEST_CASE("ingest reproduces the manifest event counts exactly") {
    TempDir dir("synth_counts");
    const auto result = synth_generate(small_plan(), 9, dir.str());
    const auto manifest = nlohmann::json::parse(read_file(result.manifest_path));

    std::map<std::string, std::map<std::string, std::size_t>> counts;
    for (const auto& ev : ingest_dir(dir.str())) ++counts[ev.user][event_kind_name(ev.kind)];

    const auto& expected = manifest.at("event_counts");
    REQUIRE(expected.size() == counts.size());
    for (const auto& [user, kinds] : expected.items()) {
      for (const auto& [kind, n] : kinds.items()) {
        CHECK(counts[user][kind] == n.get<std::size_t>());
      }
    }
  }

  TEST_CASE("invalid plans are rejected") {
    ScenarioPlan plan = small_plan();
    plan.scenarios[0].day_begin = 10;  // inside the training period
    CHECK_THROWS_AS(synth_generate(plan, 1, "/tmp/itd_invalid_plan"), Error);

    plan = small_plan();
    plan.scenarios.push_back({1, 46, 50, ScenarioKind::JobHunting});
    plan.scenarios.push_back({3, 46, 50, ScenarioKind::JobHunting});  // 3/10 malicious
    try {
      synth_generate(plan, 1, "/tmp/itd_invalid_plan");
      FAIL("expected InvalidPlan");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidPlan);
    }

    plan = small_plan();
    plan.scenarios[0].user_index = 99;
    CHECK_THROWS_AS(synth_generate(plan, 1, "/tmp/itd_invalid_plan"), Error);
  }

  TEST_CASE("planted days shift at least 3 day-level indicators by 3 train sigmas") {
    TempDir dir("synth_shift");
    const auto result = synth_generate(two_scenario_plan(), 11, dir.str());
    const auto manifest = nlohmann::json::parse(read_file(result.manifest_path));
    const auto events = ingest_dir(dir.str());
    const auto buckets = aggregate(events, Granularity::Day);
    const auto catalog = FeatureCatalog::standard(Granularity::Day);

    for (const auto& mal : manifest.at("malicious_users")) {
      const std::string user = mal.at("user").get<std::string>();
      std::set<std::string> planted_days;
      for (const auto& d : mal.at("days")) planted_days.insert(d.get<std::string>());

      std::vector<const Bucket*> user_buckets;
      for (const auto& [key, bucket] : buckets) {
        if (key.user == user) user_buckets.push_back(&bucket);
      }
      const auto n_train =
          static_cast<std::size_t>(std::ceil(0.7 * static_cast<double>(user_buckets.size())));
      std::vector<LogEvent> train_events;
      for (std::size_t i = 0; i < n_train; ++i) {
        train_events.insert(train_events.end(), user_buckets[i]->events.begin(),
                            user_buckets[i]->events.end());
      }
      const UserProfile profile = build_profile(user, train_events);

      std::vector<std::vector<double>> train_rows, planted_rows;
      for (std::size_t i = 0; i < user_buckets.size(); ++i) {
        const auto v = extract_features(*user_buckets[i], profile, catalog);
        const std::string day = format_iso_datetime(user_buckets[i]->window_start).substr(0, 10);
        if (i < n_train) train_rows.push_back(v.values);
        else if (planted_days.count(day)) planted_rows.push_back(v.values);
      }
      REQUIRE(train_rows.size() >= 10);
      REQUIRE(planted_rows.size() >= 3);

      std::size_t shifted = 0;
      for (std::size_t j = 0; j < catalog.dimension(); ++j) {
        double mean = 0.0, sq = 0.0, planted_mean = 0.0;
        for (const auto& row : train_rows) {
          mean += row[j];
          sq += row[j] * row[j];
        }
        mean /= static_cast<double>(train_rows.size());
        sq /= static_cast<double>(train_rows.size());
        const double sigma = std::sqrt(std::max(0.0, sq - mean * mean));
        for (const auto& row : planted_rows) planted_mean += row[j];
        planted_mean /= static_cast<double>(planted_rows.size());
        if (planted_mean - mean >= 3.0 * std::max(sigma, 1e-9)) ++shifted;
      }
      INFO("user ", user, " shifted indicators: ", shifted);
      CHECK(shifted >= 3);
    }
  }
}

TEST_SUITE("pipeline") {
  TEST_CASE("end-to-end run completes, evaluates, and is deterministic") {
    TempDir data("pipe_data"), out("pipe_out");
    synth_generate(small_plan(), 21, data.str());
    RunConfig cfg = small_config(data.str(), out.str());

    const RunResult first = run_pipeline(cfg);
    for (const char* artifact :
         {"events.jsonl", "catalog.json", "transforms.json", "selection_report.csv",
          "train_manifest.json", "scores.csv", "instance_report.csv", "user_report.csv",
          "run_summary.json"}) {
      CHECK(fs::exists(out.path / artifact));
    }

    const auto& summary = first.summary;
    CHECK(summary.at("evaluation").at("labels_present").get<bool>());
    const auto trained = summary.at("users_trained").get<std::vector<std::string>>();
    CHECK(trained.size() == 10);

    // Flagged users are a subset of the trained users.
    std::set<std::string> trained_set(trained.begin(), trained.end());
    for (const auto& u :
         summary.at("evaluation").at("igt").at("flagged_users").get<std::vector<std::string>>()) {
      CHECK(trained_set.count(u) == 1);
    }

    // Planted instances outscore normal test instances on average.
    const auto truth = nlohmann::json::parse(read_file((data.path / "truth.json").string()));
    std::set<std::pair<std::string, std::string>> malicious;
    for (const auto& w : truth.at("malicious_windows")) {
      malicious.insert({w.at("user").get<std::string>(), w.at("date").get<std::string>()});
    }
    std::ifstream scores_in(out.path / "scores.csv");
    CsvReader reader(scores_in);
    std::vector<std::string> row;
    double planted_sum = 0.0, normal_sum = 0.0;
    std::size_t planted_n = 0, normal_n = 0;
    while (reader.next_row(row)) {
      if (row.at(3) != "test") continue;
      const bool is_planted = malicious.count({row.at(0), row.at(2).substr(0, 10)}) > 0;
      const double score = std::stod(row.at(4));
      if (is_planted) {
        planted_sum += score;
        ++planted_n;
      } else {
        normal_sum += score;
        ++normal_n;
      }
    }
    REQUIRE(planted_n > 0);
    REQUIRE(normal_n > 0);
    CHECK(planted_sum / planted_n > normal_sum / normal_n);

    // Identical config and seed reproduce the summary hash byte for byte.
    const std::string first_summary = read_file((out.path / "run_summary.json").string());
    const RunResult second = run_pipeline(cfg);
    CHECK(second.summary_hash == first.summary_hash);
    CHECK(read_file((out.path / "run_summary.json").string()) == first_summary);
  }

  TEST_CASE("empty data dir surfaces a stage-tagged data error") {
    TempDir data("pipe_empty"), out("pipe_empty_out");
    RunConfig cfg = small_config(data.str(), out.str());
    try {
      run_pipeline(cfg);
      FAIL("expected a data error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::Data);
      CHECK(std::string(e.what()).find("[stage ingest]") != std::string::npos);
    }
  }

  TEST_CASE("scoring without artifacts reports NoScores") {
    TempDir out("pipe_noscores");
    RunConfig cfg = small_config(out.str(), out.str());
    try {
      sweep(cfg, "kappa", default_kappa_grid());
      FAIL("expected NoScores");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoScores);
    }
  }

  TEST_CASE("kappa sweep covers the documented grid and tau sweep matches a rerun") {
    TempDir data("pipe_sweep_data"), out("pipe_sweep_out");
    synth_generate(small_plan(), 22, data.str());
    RunConfig cfg = small_config(data.str(), out.str());
    run_pipeline(cfg);

    const auto grid = default_kappa_grid();
    CHECK(grid.size() == 11);  // 5..20 step 1.5 inclusive
    CHECK(grid.front() == doctest::Approx(0.05));
    CHECK(grid.back() == doctest::Approx(0.20));
    const auto rows = sweep(cfg, "kappa", grid);
    REQUIRE(rows.size() == 11);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].at("value").get<double>() == doctest::Approx(grid[i]));
    }

    // Sweeping tau must agree with a full rerun at that tau.
    const auto tau_rows = sweep(cfg, "tau", {90.0});
    TempDir out2("pipe_sweep_out2");
    RunConfig cfg2 = cfg;
    cfg2.out_dir = out2.str();
    cfg2.tau = 90.0;
    const RunResult rerun = run_pipeline(cfg2);
    const double swept_f1 = tau_rows[0].at("instance_f1").get<double>();
    const double rerun_f1 =
        rerun.summary.at("evaluation").at("igt").at("instance").at("f1").get<double>();
    CHECK(swept_f1 == doctest::Approx(rerun_f1).epsilon(1e-9));
  }

  TEST_CASE("stage artifacts allow independent reruns") {
    TempDir data("pipe_stages_data"), out("pipe_stages_out");
    synth_generate(small_plan(), 23, data.str());
    RunConfig cfg = small_config(data.str(), out.str());
    stage_ingest(cfg);
    stage_featurize(cfg);
    stage_select_transforms(cfg);
    stage_train(cfg);
    stage_score(cfg);
    const auto summary = stage_evaluate(cfg);
    CHECK(summary.at("labels_present").get<bool>());
    CHECK(summary.contains("igt"));
  }
}
