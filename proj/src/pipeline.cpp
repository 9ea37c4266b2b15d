#include "itd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "itd/baselines.hpp"
#include "itd/csv.hpp"
#include "itd/error.hpp"
#include "itd/imaging.hpp"
#include "itd/ingest.hpp"
#include "itd/scoring.hpp"
#include "itd/selection.hpp"
#include "itd/util.hpp"

namespace fs = std::filesystem;

namespace itd {

namespace {

// Rethrows module errors annotated with the pipeline stage (and user when known).
template <typename Fn>
auto with_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "[stage " + stage + "] " + e.what());
  }
}

struct Truth {
  bool present = false;
  std::map<std::string, std::set<std::string>> malicious_days;  // user -> ISO dates
  std::set<std::string> malicious_users;
};

Truth load_truth(const std::string& data_dir) {
  Truth truth;
  const std::string path = (fs::path(data_dir) / "truth.json").string();
  if (!file_exists(path)) return truth;
  truth.present = true;
  nlohmann::json j = nlohmann::json::parse(read_file(path));
  for (const auto& w : j.at("malicious_windows")) {
    truth.malicious_days[w.at("user").get<std::string>()].insert(
        w.at("date").get<std::string>());
  }
  for (const auto& u : j.at("malicious_users")) {
    truth.malicious_users.insert(u.at("user").get<std::string>());
  }
  return truth;
}

int label_for_window(const Truth& truth, const std::string& user, Timestamp window_start,
                     Timestamp window_end) {
  if (!truth.present) return -1;
  auto it = truth.malicious_days.find(user);
  if (it == truth.malicious_days.end()) return 0;
  const Timestamp end = std::max(window_end, window_start + 1);
  for (Timestamp day = day_start(window_start); day < end; day += kSecondsPerDay) {
    if (it->second.count(format_iso_datetime(day).substr(0, 10))) return 1;
  }
  return 0;
}

Categorizer load_categorizer(const RunConfig& cfg) {
  Categorizer cats;
  if (cfg.catalog_path.empty()) return cats;
  nlohmann::json j = nlohmann::json::parse(read_file(cfg.catalog_path));
  if (j.contains("doc_suffixes")) cats.doc_suffixes = j["doc_suffixes"].get<std::vector<std::string>>();
  if (j.contains("exe_suffixes")) cats.exe_suffixes = j["exe_suffixes"].get<std::vector<std::string>>();
  if (j.contains("job_keywords")) cats.job_keywords = j["job_keywords"].get<std::vector<std::string>>();
  if (j.contains("leak_keywords")) cats.leak_keywords = j["leak_keywords"].get<std::vector<std::string>>();
  return cats;
}

std::string number_str(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Feature store
// ---------------------------------------------------------------------------

void write_feature_csv(const std::string& path, const std::vector<FeatureVector>& vectors,
                       const FeatureCatalog& catalog) {
  std::string out = "user,granularity,window_start,label";
  for (const auto& comp : catalog.components) out += "," + comp.name;
  out.push_back('\n');
  for (const FeatureVector& v : vectors) {
    out += join_csv_row({v.user, granularity_name(v.granularity),
                         format_iso_datetime(v.window_start),
                         v.label < 0 ? "" : std::to_string(v.label)});
    for (double x : v.values) {
      out.push_back(',');
      out += number_str(x);
    }
    out.push_back('\n');
  }
  write_file(path, out);
}

std::vector<FeatureVector> read_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::DataError, "cannot open feature store " + path);
  CsvReader reader(in);
  if (!reader.has_header()) fail(ErrorKind::EmptyInput, "feature store has no header: " + path);
  std::vector<FeatureVector> out;
  std::vector<std::string> row;
  while (reader.next_row(row)) {
    FeatureVector v;
    v.user = row.at(0);
    v.granularity = granularity_from_name(row.at(1));
    const auto ts = parse_iso_datetime(row.at(2));
    if (!ts) fail(ErrorKind::DataError, "bad window_start in " + path);
    v.window_start = *ts;
    v.label = row.at(3).empty() ? -1 : std::stoi(row.at(3));
    v.values.reserve(row.size() - 4);
    for (std::size_t i = 4; i < row.size(); ++i) v.values.push_back(std::stod(row[i]));
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::string> feature_store_users(const std::string& out_dir) {
  std::vector<std::string> users;
  const fs::path dir = fs::path(out_dir) / "features";
  if (!fs::exists(dir)) fail(ErrorKind::DataError, "feature store missing; run featurize first");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".csv") users.push_back(entry.path().stem().string());
  }
  std::sort(users.begin(), users.end());
  return users;
}

std::string feature_path(const RunConfig& cfg, const std::string& user) {
  return (fs::path(cfg.out_dir) / "features" / (user + ".csv")).string();
}

// ---------------------------------------------------------------------------
// Transform set persistence
// ---------------------------------------------------------------------------

nlohmann::json spec_to_json(const TransformSpec& t) {
  nlohmann::json j;
  j["index"] = t.index;
  j["rotate90"] = t.rotate90;
  j["flip_h"] = t.flip_h;
  j["blur"] = t.blur;
  j["sharpen"] = t.sharpen;
  j["shift_h"] = t.shift_h;
  j["shift_w"] = t.shift_w;
  j["name"] = t.name();
  return j;
}

TransformSpec spec_from_json(const nlohmann::json& j) {
  TransformSpec t;
  t.index = j.at("index").get<int>();
  t.rotate90 = j.at("rotate90").get<bool>();
  t.flip_h = j.at("flip_h").get<bool>();
  t.blur = j.at("blur").get<bool>();
  t.sharpen = j.at("sharpen").get<bool>();
  t.shift_h = j.at("shift_h").get<int>();
  t.shift_w = j.at("shift_w").get<int>();
  return t;
}

std::vector<TransformSpec> candidates_for_policy(const RunConfig& cfg) {
  if (cfg.transform_policy == "geometric") return candidate_set(TransformPolicy::Geometric36);
  if (cfg.transform_policy == "simplified") return candidate_set(TransformPolicy::Simplified63);
  if (cfg.transform_policy == "full") return candidate_set(TransformPolicy::Full144);
  if (cfg.transform_policy == "explicit") {
    const auto full = candidate_set(TransformPolicy::Full144);
    std::vector<TransformSpec> picked;
    for (int idx : cfg.explicit_transforms) {
      if (idx < 0 || idx >= static_cast<int>(full.size())) {
        fail(ErrorKind::ConfigError, "explicit transform index out of range: " + std::to_string(idx));
      }
      picked.push_back(full[static_cast<std::size_t>(idx)]);
    }
    for (std::size_t i = 0; i < picked.size(); ++i) picked[i].index = static_cast<int>(i);
    if (picked.size() < 2) fail(ErrorKind::ConfigError, "explicit transform list needs >= 2 entries");
    return picked;
  }
  fail(ErrorKind::ConfigError, "unknown transform policy '" + cfg.transform_policy + "'");
}

std::vector<TransformSpec> load_transforms(const RunConfig& cfg) {
  const std::string path = (fs::path(cfg.out_dir) / "transforms.json").string();
  if (!file_exists(path)) fail(ErrorKind::DataError, "transforms.json missing; run select-transforms first");
  nlohmann::json j = nlohmann::json::parse(read_file(path));
  std::vector<TransformSpec> out;
  for (const auto& spec : j.at("transforms")) out.push_back(spec_from_json(spec));
  return out;
}

// ---------------------------------------------------------------------------
// Model sidecar (normalizer + Dirichlet parameters + threshold)
// ---------------------------------------------------------------------------

struct UserSidecar {
  std::string user;
  Normalizer normalizer;
  DirichletParams dirichlet;
  double lambda = 0.0;
  double score_mean = 0.0;
  double score_std = 1.0;
  std::size_t calibration_count = 0;
  std::vector<double> train_scores;
  std::vector<Timestamp> train_windows;
};

std::string model_stem(const RunConfig& cfg, const std::string& user) {
  return (fs::path(cfg.out_dir) / "models" / user).string();
}

void save_sidecar(const RunConfig& cfg, const UserSidecar& sc) {
  nlohmann::json j;
  j["user"] = sc.user;
  j["granularity"] = granularity_name(cfg.granularity);
  j["lambda"] = sc.lambda;
  j["tau"] = cfg.tau;
  j["normalizer_min"] = sc.normalizer.min;
  j["normalizer_max"] = sc.normalizer.max;
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& fit : sc.dirichlet.per_transform) {
    nlohmann::json f;
    f["alpha"] = fit.alpha;
    f["iterations"] = fit.iterations;
    f["log_likelihood"] = fit.log_likelihood;
    f["degenerate"] = fit.degenerate;
    fits.push_back(std::move(f));
  }
  j["dirichlet"] = std::move(fits);
  j["lambda_calibration_count"] = sc.calibration_count;
  j["score_mean"] = sc.score_mean;
  j["score_std"] = sc.score_std;
  j["train_scores"] = sc.train_scores;
  nlohmann::json windows = nlohmann::json::array();
  for (Timestamp t : sc.train_windows) windows.push_back(format_iso_datetime(t));
  j["train_windows"] = std::move(windows);
  write_file(model_stem(cfg, sc.user) + ".sidecar.json", j.dump(2) + "\n");
}

UserSidecar load_sidecar(const RunConfig& cfg, const std::string& user) {
  const std::string path = model_stem(cfg, user) + ".sidecar.json";
  if (!file_exists(path)) fail(ErrorKind::DataError, "model sidecar missing for " + user);
  nlohmann::json j = nlohmann::json::parse(read_file(path));
  UserSidecar sc;
  sc.user = user;
  sc.lambda = j.at("lambda").get<double>();
  sc.normalizer.granularity = cfg.granularity;
  sc.normalizer.min = j.at("normalizer_min").get<std::vector<double>>();
  sc.normalizer.max = j.at("normalizer_max").get<std::vector<double>>();
  for (const auto& f : j.at("dirichlet")) {
    DirichletFit fit;
    fit.alpha = f.at("alpha").get<std::vector<double>>();
    fit.iterations = f.at("iterations").get<int>();
    fit.log_likelihood = f.at("log_likelihood").get<double>();
    fit.degenerate = f.at("degenerate").get<bool>();
    sc.dirichlet.per_transform.push_back(std::move(fit));
  }
  sc.calibration_count = j.at("lambda_calibration_count").get<std::size_t>();
  sc.score_mean = j.at("score_mean").get<double>();
  sc.score_std = j.at("score_std").get<double>();
  sc.train_scores = j.at("train_scores").get<std::vector<double>>();
  for (const auto& w : j.at("train_windows")) {
    sc.train_windows.push_back(*parse_iso_datetime(w.get<std::string>()));
  }
  return sc;
}

std::vector<std::string> trained_users(const RunConfig& cfg) {
  const std::string path = (fs::path(cfg.out_dir) / "train_manifest.json").string();
  if (!file_exists(path)) fail(ErrorKind::DataError, "train manifest missing; run train first");
  nlohmann::json j = nlohmann::json::parse(read_file(path));
  return j.at("users").get<std::vector<std::string>>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("data_dir", cfg.data_dir);
  get("out_dir", cfg.out_dir);
  if (j.contains("granularity")) cfg.granularity = granularity_from_name(j.at("granularity"));
  get("train_fraction", cfg.train_fraction);
  get("min_train", cfg.min_train);
  get("min_test", cfg.min_test);
  get("tau", cfg.tau);
  get("kappa", cfg.kappa);
  get("calibration_fraction", cfg.calibration_fraction);
  get("softmax_clip", cfg.softmax_clip);
  get("transform_policy", cfg.transform_policy);
  get("explicit_transforms", cfg.explicit_transforms);
  get("prune_transforms", cfg.prune_transforms);
  get("band_lo", cfg.band_lo);
  get("band_hi", cfg.band_hi);
  get("selection_sample_cap", cfg.selection_sample_cap);
  get("selection_min_images", cfg.selection_min_images);
  if (j.contains("arch")) cfg.arch = arch_from_name(j.at("arch"));
  get("epochs", cfg.epochs);
  get("batch_size", cfg.batch_size);
  get("learning_rate", cfg.learning_rate);
  get("seed", cfg.seed);
  get("with_baselines", cfg.with_baselines);
  get("catalog_path", cfg.catalog_path);
  return cfg;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["data_dir"] = data_dir;
  j["out_dir"] = out_dir;
  j["granularity"] = granularity_name(granularity);
  j["train_fraction"] = train_fraction;
  j["min_train"] = min_train;
  j["min_test"] = min_test;
  j["tau"] = tau;
  j["kappa"] = kappa;
  j["calibration_fraction"] = calibration_fraction;
  j["softmax_clip"] = softmax_clip;
  j["transform_policy"] = transform_policy;
  j["explicit_transforms"] = explicit_transforms;
  j["prune_transforms"] = prune_transforms;
  j["band_lo"] = band_lo;
  j["band_hi"] = band_hi;
  j["selection_sample_cap"] = selection_sample_cap;
  j["selection_min_images"] = selection_min_images;
  j["arch"] = arch_name(arch);
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["seed"] = seed;
  j["with_baselines"] = with_baselines;
  j["catalog_path"] = catalog_path;
  return j;
}

std::string RunConfig::config_hash() const { return fnv1a_hex(to_json().dump()); }

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

std::size_t stage_ingest(const RunConfig& cfg) {
  return with_stage("ingest", [&]() -> std::size_t {
    const std::pair<SourceKind, const char*> sources[] = {
        {SourceKind::Logon, "logon.csv"},  {SourceKind::Device, "device.csv"},
        {SourceKind::File, "file.csv"},    {SourceKind::Email, "email.csv"},
        {SourceKind::Http, "http.csv"},
    };

    std::vector<LogEvent> events;
    nlohmann::json stats_json;
    std::string input_blob;
    std::size_t found = 0;
    for (const auto& [kind, name] : sources) {
      const fs::path path = fs::path(cfg.data_dir) / name;
      if (!fs::exists(path)) continue;
      ++found;
      const std::string content = read_file(path.string());
      input_blob += content;
      std::istringstream in(content);
      ParseStats stats;
      auto parsed = parse_events(kind, ColumnMap::defaults(kind), in, &stats);
      nlohmann::json s;
      s["rows"] = stats.rows;
      s["parsed"] = stats.parsed;
      s["malformed"] = stats.malformed;
      stats_json[name] = std::move(s);
      events.insert(events.end(), std::make_move_iterator(parsed.begin()),
                    std::make_move_iterator(parsed.end()));
    }
    if (found == 0) {
      fail(ErrorKind::DataError, "no source CSVs found in '" + cfg.data_dir + "'");
    }

    std::stable_sort(events.begin(), events.end(),
                     [](const LogEvent& a, const LogEvent& b) { return a.ts < b.ts; });

    std::string out;
    for (const LogEvent& ev : events) {
      out += event_to_jsonl(ev);
      out.push_back('\n');
    }
    write_file((fs::path(cfg.out_dir) / "events.jsonl").string(), out);

    nlohmann::json manifest;
    manifest["config_hash"] = cfg.config_hash();
    manifest["seed"] = cfg.seed;
    manifest["input_hash"] = fnv1a_hex(input_blob);
    manifest["sources"] = std::move(stats_json);
    manifest["events_total"] = events.size();
    write_file((fs::path(cfg.out_dir) / "ingest_manifest.json").string(),
               manifest.dump(2) + "\n");
    return events.size();
  });
}

void stage_featurize(const RunConfig& cfg) {
  with_stage("featurize", [&] {
    const std::string events_path = (fs::path(cfg.out_dir) / "events.jsonl").string();
    if (!file_exists(events_path)) fail(ErrorKind::DataError, "events.jsonl missing; run ingest first");

    std::vector<LogEvent> events;
    {
      std::istringstream in(read_file(events_path));
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) events.push_back(event_from_jsonl(line));
      }
    }
    if (events.empty()) fail(ErrorKind::EmptyInput, "no events to featurize");

    const Truth truth = load_truth(cfg.data_dir);
    const FeatureCatalog catalog =
        FeatureCatalog::standard(cfg.granularity, load_categorizer(cfg));

    auto buckets = aggregate(events, cfg.granularity);
    std::map<std::string, std::vector<const Bucket*>> per_user;
    for (const auto& [key, bucket] : buckets) per_user[key.user].push_back(&bucket);

    nlohmann::json users_json = nlohmann::json::array();
    for (const auto& [user, user_buckets] : per_user) {
      // Profile comes from the training-period buckets only (the same
      // chronological boundary the split uses later).
      const auto n_train = static_cast<std::size_t>(std::ceil(
          cfg.train_fraction * static_cast<double>(user_buckets.size())));
      std::vector<LogEvent> train_events;
      for (std::size_t i = 0; i < n_train && i < user_buckets.size(); ++i) {
        train_events.insert(train_events.end(), user_buckets[i]->events.begin(),
                            user_buckets[i]->events.end());
      }
      const UserProfile profile = build_profile(user, train_events);

      std::vector<FeatureVector> vectors;
      vectors.reserve(user_buckets.size());
      for (const Bucket* bucket : user_buckets) {
        FeatureVector v = extract_features(*bucket, profile, catalog);
        v.label = label_for_window(truth, user, bucket->window_start, bucket->window_end);
        vectors.push_back(std::move(v));
      }
      write_feature_csv(feature_path(cfg, user), vectors, catalog);
      nlohmann::json u;
      u["user"] = user;
      u["own_pc"] = profile.own_pc;
      u["windows"] = vectors.size();
      users_json.push_back(std::move(u));
    }

    write_file((fs::path(cfg.out_dir) / "catalog.json").string(), catalog.manifest_json() + "\n");
    nlohmann::json manifest;
    manifest["config_hash"] = cfg.config_hash();
    manifest["seed"] = cfg.seed;
    manifest["granularity"] = granularity_name(cfg.granularity);
    manifest["labels_present"] = truth.present;
    manifest["users"] = std::move(users_json);
    write_file((fs::path(cfg.out_dir) / "features_manifest.json").string(),
               manifest.dump(2) + "\n");
  });
}

void stage_select_transforms(const RunConfig& cfg) {
  with_stage("select-transforms", [&] {
    std::vector<TransformSpec> candidates = candidates_for_policy(cfg);
    std::vector<PairAccuracy> pairs;
    std::vector<PruneRecord> records;
    std::vector<TransformSpec> working = candidates;
    bool pruned = false;

    if (cfg.prune_transforms && candidates.size() > 2) {
      // Pooled, round-robin sample of normalized training images across users.
      std::vector<BehaviorImage> sample;
      const auto users = feature_store_users(cfg.out_dir);
      std::vector<std::vector<BehaviorImage>> per_user_images;
      for (const std::string& user : users) {
        auto vectors = read_feature_csv(feature_path(cfg, user));
        if (vectors.size() < cfg.min_train + cfg.min_test) continue;
        const auto n_train = static_cast<std::size_t>(std::ceil(
            cfg.train_fraction * static_cast<double>(vectors.size())));
        std::vector<FeatureVector> train(vectors.begin(),
                                         vectors.begin() + static_cast<std::ptrdiff_t>(n_train));
        const Normalizer norm = fit_normalizer(train);
        std::vector<BehaviorImage> images;
        for (const FeatureVector& v : train) images.push_back(to_image(normalize(v, norm)));
        per_user_images.push_back(std::move(images));
      }
      for (std::size_t round = 0; sample.size() < cfg.selection_sample_cap; ++round) {
        bool any = false;
        for (auto& images : per_user_images) {
          if (round < images.size() && sample.size() < cfg.selection_sample_cap) {
            sample.push_back(images[round]);
            any = true;
          }
        }
        if (!any) break;
      }

      if (sample.size() >= cfg.selection_min_images) {
        ProbeConfig probe;
        probe.min_images = cfg.selection_min_images;
        probe.seed = Rng::mix(cfg.seed, 0x5e1ec7);
        pairs = all_pair_accuracies(sample, candidates, probe);
        working = prune(candidates, pairs, cfg.band_lo, cfg.band_hi, &records);
        pruned = true;
      }
    }

    write_file((fs::path(cfg.out_dir) / "selection_report.csv").string(),
               selection_report_csv(pairs, records, cfg.band_lo, cfg.band_hi));

    nlohmann::json j;
    j["policy"] = cfg.transform_policy;
    j["pruned"] = pruned;
    j["band_lo"] = cfg.band_lo;
    j["band_hi"] = cfg.band_hi;
    j["candidate_count"] = candidates.size();
    nlohmann::json specs = nlohmann::json::array();
    for (const TransformSpec& t : working) specs.push_back(spec_to_json(t));
    j["transforms"] = std::move(specs);
    write_file((fs::path(cfg.out_dir) / "transforms.json").string(), j.dump(2) + "\n");
  });
}

void stage_train(const RunConfig& cfg) {
  with_stage("train", [&] {
    const auto transforms = load_transforms(cfg);
    const auto users = feature_store_users(cfg.out_dir);

    std::vector<std::string> processed;
    nlohmann::json skipped = nlohmann::json::array();

    for (const std::string& user : users) {
      try {
        auto vectors = read_feature_csv(feature_path(cfg, user));
        auto [train, test] =
            chronological_split(vectors, cfg.train_fraction,
                                std::min(cfg.min_train, cfg.min_test));
        if (train.size() < cfg.min_train || test.size() < cfg.min_test) {
          fail(ErrorKind::TooFewInstances,
               "train " + std::to_string(train.size()) + " / test " +
                   std::to_string(test.size()) + " below minimum");
        }

        const Normalizer norm = fit_normalizer(train);
        std::vector<BehaviorImage> train_images;
        train_images.reserve(train.size());
        for (const FeatureVector& v : train) train_images.push_back(to_image(normalize(v, norm)));

        // The chronological tail of the training windows is held out of the
        // classifier fit so lambda and the score statistics are calibrated
        // out of sample; in-sample scores run optimistically low.
        std::size_t n_cal = 0;
        if (cfg.calibration_fraction > 0.0 && train_images.size() >= 20) {
          // Below 20 samples the nearest-rank 95th percentile degenerates to
          // the maximum, so the calibration tail prefers to reach 20.
          n_cal = std::max<std::size_t>(
              20, static_cast<std::size_t>(std::floor(cfg.calibration_fraction *
                                                      static_cast<double>(train_images.size()))));
          n_cal = std::min(n_cal, train_images.size() / 2);
        }
        const std::size_t n_fit = train_images.size() - n_cal;
        const std::vector<BehaviorImage> fit_images(train_images.begin(),
                                                    train_images.begin() +
                                                        static_cast<std::ptrdiff_t>(n_fit));

        const SelfLabelledSet dataset = self_label(fit_images, transforms);

        auto model = build_classifier<float>(
            train_images.front().side, static_cast<int>(transforms.size()), cfg.arch,
            Rng::mix(cfg.seed, Rng::hash_str(user)));
        TrainConfig tc;
        tc.batch_size = cfg.batch_size;
        tc.epochs = cfg.epochs;
        tc.learning_rate = cfg.learning_rate;
        tc.seed = Rng::mix(cfg.seed, Rng::hash_str(user) ^ 0x7a17ull);
        fit_classifier(model, dataset, tc);

        const auto stats = collect_softmax_stats(model, fit_images, transforms, cfg.softmax_clip);
        UserSidecar sc;
        sc.user = user;
        sc.normalizer = norm;
        sc.calibration_count = n_cal;
        sc.dirichlet = fit_dirichlet_params(stats);
        for (const BehaviorImage& img : train_images) {
          sc.train_scores.push_back(
              anomaly_score(model, sc.dirichlet, img, transforms, cfg.softmax_clip));
        }
        const std::vector<double> reference(
            sc.train_scores.begin() + static_cast<std::ptrdiff_t>(n_cal ? n_fit : 0),
            sc.train_scores.end());
        sc.lambda = fit_threshold(reference, cfg.tau);
        // Median/MAD centering over the calibration scores: single exploded
        // scores would otherwise drown the scale and shrink every other z.
        std::vector<double> sorted = reference;
        std::sort(sorted.begin(), sorted.end());
        const double median = sorted[sorted.size() / 2];
        std::vector<double> deviations;
        deviations.reserve(sorted.size());
        for (double x : sorted) deviations.push_back(std::abs(x - median));
        std::sort(deviations.begin(), deviations.end());
        const double mad = deviations[deviations.size() / 2];
        sc.score_mean = median;
        sc.score_std = std::max(1e-12, 1.4826 * mad);
        for (const FeatureVector& v : train) sc.train_windows.push_back(v.window_start);

        save_checkpoint(model, model_stem(cfg, user));
        save_sidecar(cfg, sc);
        processed.push_back(user);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::TooFewInstances) {
          nlohmann::json s;
          s["user"] = user;
          s["reason"] = e.what();
          skipped.push_back(std::move(s));
          continue;
        }
        throw Error(e.kind(), "user " + user + ": " + e.what());
      }
    }

    nlohmann::json manifest;
    manifest["config_hash"] = cfg.config_hash();
    manifest["seed"] = cfg.seed;
    manifest["transform_count"] = transforms.size();
    manifest["users"] = processed;
    manifest["skipped"] = std::move(skipped);
    write_file((fs::path(cfg.out_dir) / "train_manifest.json").string(), manifest.dump(2) + "\n");
  });
}

void stage_score(const RunConfig& cfg) {
  with_stage("score", [&] {
    const auto transforms = load_transforms(cfg);
    const auto users = trained_users(cfg);

    std::vector<InstanceRecord> records;
    for (const std::string& user : users) {
      auto model = load_checkpoint(model_stem(cfg, user));
      const UserSidecar sc = load_sidecar(cfg, user);
      auto vectors = read_feature_csv(feature_path(cfg, user));
      auto [train, test] = chronological_split(vectors, cfg.train_fraction,
                                               std::min(cfg.min_train, cfg.min_test));

      // Per-user standardization so pooled rankings compare across models.
      auto standardize = [&](double x) { return (x - sc.score_mean) / sc.score_std; };

      const std::size_t n_fit = train.size() - sc.calibration_count;
      for (std::size_t i = 0; i < train.size(); ++i) {
        InstanceRecord rec;
        rec.user = user;
        rec.granularity = cfg.granularity;
        rec.window_start = train[i].window_start;
        rec.score = sc.train_scores.at(i);
        rec.zscore = standardize(rec.score);
        rec.lambda = sc.lambda;
        rec.flagged = false;
        rec.label = train[i].label;
        rec.is_train = true;
        rec.is_calibration = sc.calibration_count > 0 && i >= n_fit;
        records.push_back(std::move(rec));
      }
      for (const FeatureVector& v : test) {
        const BehaviorImage img = to_image(normalize(v, sc.normalizer));
        InstanceRecord rec;
        rec.user = user;
        rec.granularity = cfg.granularity;
        rec.window_start = v.window_start;
        rec.score = anomaly_score(model, sc.dirichlet, img, transforms, cfg.softmax_clip);
        rec.zscore = standardize(rec.score);
        rec.lambda = sc.lambda;
        rec.flagged = classify_instance(rec.score, {cfg.tau, sc.lambda, cfg.kappa});
        rec.label = v.label;
        rec.is_train = false;
        records.push_back(std::move(rec));
      }
    }
    write_file((fs::path(cfg.out_dir) / "scores.csv").string(), scores_csv(records));
  });
}

namespace {

std::vector<InstanceRecord> read_scores_csv(const RunConfig& cfg) {
  const std::string path = (fs::path(cfg.out_dir) / "scores.csv").string();
  if (!file_exists(path)) fail(ErrorKind::NoScores, "scores.csv missing; run score first");
  std::ifstream in(path);
  CsvReader reader(in);
  std::vector<InstanceRecord> records;
  std::vector<std::string> row;
  while (reader.next_row(row)) {
    InstanceRecord rec;
    rec.user = row.at(0);
    rec.granularity = granularity_from_name(row.at(1));
    rec.window_start = *parse_iso_datetime(row.at(2));
    rec.is_train = row.at(3) != "test";
    rec.is_calibration = row.at(3) == "cal";
    rec.score = std::stod(row.at(4));
    rec.lambda = std::stod(row.at(5));
    rec.flagged = row.at(6) == "1";
    rec.label = row.at(7).empty() ? -1 : std::stoi(row.at(7));
    rec.zscore = row.size() > 8 ? std::stod(row.at(8)) : rec.score;
    records.push_back(std::move(rec));
  }
  if (records.empty()) fail(ErrorKind::NoScores, "scores.csv is empty");
  return records;
}

std::vector<UserDecision> user_decisions(const std::vector<InstanceRecord>& records,
                                         double kappa) {
  std::map<std::string, std::vector<const InstanceRecord*>> per_user;
  for (const InstanceRecord& rec : records) {
    if (!rec.is_train) per_user[rec.user].push_back(&rec);
  }
  std::vector<UserDecision> out;
  for (const auto& [user, recs] : per_user) {
    UserDecision d;
    d.user = user;
    d.instances = recs.size();
    std::vector<bool> flags;
    bool any_malicious = false;
    bool labels_known = true;
    for (const InstanceRecord* r : recs) {
      flags.push_back(r->flagged);
      if (r->label > 0) any_malicious = true;
      if (r->label < 0) labels_known = false;
    }
    std::size_t flagged = 0;
    for (bool f : flags) flagged += f ? 1 : 0;
    d.flagged_proportion = static_cast<double>(flagged) / static_cast<double>(flags.size());
    d.flagged = classify_user(flags, kappa);
    d.label = labels_known ? (any_malicious ? 1 : 0) : -1;
    out.push_back(std::move(d));
  }
  return out;
}

nlohmann::json level_to_json(const LevelReport& r) {
  nlohmann::json j;
  j["n"] = r.evaluated;
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["fn"] = r.counts.fn;
  j["tn"] = r.counts.tn;
  j["dr"] = r.rates.dr;
  j["pr"] = r.rates.pr;
  j["fpr"] = r.rates.fpr;
  j["f1"] = r.rates.f1;
  j["auroc"] = r.auroc;
  j["diagnostics"] = r.rates.diagnostics;
  return j;
}

struct BaselineInputs {
  std::vector<std::vector<double>> train_vectors;
  std::vector<std::vector<double>> test_vectors;
  std::vector<const InstanceRecord*> test_records;  // aligned with test_vectors
};

// Baselines consume the pooled feature vectors under one global min-max
// normalizer, as a shared model normalizes them; only the per-user detector
// gets per-user scaling.
BaselineInputs gather_baseline_inputs(const RunConfig& cfg,
                                      const std::vector<InstanceRecord>& records) {
  BaselineInputs inputs;
  std::map<std::pair<std::string, Timestamp>, const InstanceRecord*> index;
  for (const InstanceRecord& rec : records) {
    index[{rec.user, rec.window_start}] = &rec;
  }
  std::vector<FeatureVector> pooled_train;
  std::vector<std::pair<FeatureVector, const InstanceRecord*>> pooled_test;
  for (const std::string& user : trained_users(cfg)) {
    auto vectors = read_feature_csv(feature_path(cfg, user));
    auto [train, test] = chronological_split(vectors, cfg.train_fraction,
                                             std::min(cfg.min_train, cfg.min_test));
    for (FeatureVector& v : train) pooled_train.push_back(std::move(v));
    for (FeatureVector& v : test) {
      auto it = index.find({user, v.window_start});
      if (it == index.end()) continue;
      pooled_test.push_back({std::move(v), it->second});
    }
  }
  const Normalizer global_norm = fit_normalizer(pooled_train);
  for (const FeatureVector& v : pooled_train) {
    inputs.train_vectors.push_back(normalize(v, global_norm).values);
  }
  for (const auto& [v, rec] : pooled_test) {
    inputs.test_vectors.push_back(normalize(v, global_norm).values);
    inputs.test_records.push_back(rec);
  }
  return inputs;
}

nlohmann::json evaluate_method(const RunConfig& cfg, const std::string& method,
                               const std::vector<InstanceRecord>& test_records,
                               std::string* instance_csv, std::string* user_csv) {
  const auto decisions = user_decisions(test_records, cfg.kappa);
  const EvalReport report = build_report(test_records, decisions);
  if (instance_csv) *instance_csv += instance_report_csv(report.instance, method, cfg.granularity);
  if (user_csv) *user_csv += user_report_csv(report.user, method, cfg.granularity);

  nlohmann::json j;
  j["instance"] = level_to_json(report.instance);
  j["user"] = level_to_json(report.user);
  nlohmann::json flagged = nlohmann::json::array();
  for (const auto& d : decisions) {
    if (d.flagged) flagged.push_back(d.user);
  }
  j["flagged_users"] = std::move(flagged);
  return j;
}

}  // namespace

nlohmann::json stage_evaluate(const RunConfig& cfg) {
  return with_stage("evaluate", [&]() -> nlohmann::json {
    const auto records = read_scores_csv(cfg);

    std::vector<InstanceRecord> test_records;
    bool labels_present = true;
    for (const InstanceRecord& rec : records) {
      if (!rec.is_train) {
        test_records.push_back(rec);
        if (rec.label < 0) labels_present = false;
      }
    }

    nlohmann::json summary;
    summary["labels_present"] = labels_present;

    // The flagged-instance set and flagged-user set always come out.
    nlohmann::json flagged_instances = nlohmann::json::array();
    for (const InstanceRecord& rec : test_records) {
      if (rec.flagged) {
        nlohmann::json f;
        f["user"] = rec.user;
        f["window_start"] = format_iso_datetime(rec.window_start);
        f["score"] = rec.score;
        flagged_instances.push_back(std::move(f));
      }
    }
    summary["flagged_instances"] = std::move(flagged_instances);
    const auto decisions = user_decisions(test_records, cfg.kappa);
    nlohmann::json flagged_users = nlohmann::json::array();
    for (const auto& d : decisions) {
      if (d.flagged) flagged_users.push_back(d.user);
    }
    summary["flagged_users"] = std::move(flagged_users);

    // Per-user trend series for plotting.
    std::map<std::string, std::vector<InstanceRecord>> per_user_records;
    for (const InstanceRecord& rec : records) per_user_records[rec.user].push_back(rec);
    for (const auto& [user, recs] : per_user_records) {
      write_file((fs::path(cfg.out_dir) / "trends" / (user + ".csv")).string(), trend_csv(recs));
    }

    // Without ground truth only the flagged sets and trends come out.
    if (!labels_present) return summary;

    std::string instance_csv = report_csv_header();
    std::string user_csv = report_csv_header();
    // Per-user models have no common raw scale; the pooled IGT ranking uses
    // the per-user standardized score. Flags already use per-user lambdas.
    std::vector<InstanceRecord> igt_records = test_records;
    for (InstanceRecord& rec : igt_records) rec.score = rec.zscore;
    summary["igt"] = evaluate_method(cfg, "igt", igt_records, &instance_csv, &user_csv);

    if (cfg.with_baselines) {
      BaselineInputs inputs = gather_baseline_inputs(cfg, records);

      // Isolation forest.
      IsolationForestConfig if_cfg;
      if_cfg.seed = Rng::mix(cfg.seed, 0x1f0c);
      IsolationForest forest = fit_iforest(inputs.train_vectors, if_cfg);
      std::vector<double> if_train_scores;
      for (const auto& v : inputs.train_vectors) if_train_scores.push_back(score_iforest(forest, v));
      const double if_lambda = fit_threshold(if_train_scores, cfg.tau);
      std::vector<InstanceRecord> if_records;
      for (std::size_t i = 0; i < inputs.test_vectors.size(); ++i) {
        InstanceRecord rec = *inputs.test_records[i];
        rec.score = score_iforest(forest, inputs.test_vectors[i]);
        rec.lambda = if_lambda;
        rec.flagged = rec.score >= if_lambda;
        if_records.push_back(std::move(rec));
      }
      summary["iforest"] = evaluate_method(cfg, "iforest", if_records, &instance_csv, &user_csv);

      // Autoencoder.
      AutoencoderConfig ae_cfg;
      ae_cfg.seed = Rng::mix(cfg.seed, 0xae);
      ae_cfg.epochs = 200;
      ae_cfg.hidden_layers = 1;
      Autoencoder ae = fit_autoencoder(inputs.train_vectors, ae_cfg);
      std::vector<double> ae_train_scores;
      for (const auto& v : inputs.train_vectors) ae_train_scores.push_back(score_autoencoder(ae, v));
      const double ae_lambda = fit_threshold(ae_train_scores, cfg.tau);
      std::vector<InstanceRecord> ae_records;
      for (std::size_t i = 0; i < inputs.test_vectors.size(); ++i) {
        InstanceRecord rec = *inputs.test_records[i];
        rec.score = score_autoencoder(ae, inputs.test_vectors[i]);
        rec.lambda = ae_lambda;
        rec.flagged = rec.score >= ae_lambda;
        ae_records.push_back(std::move(rec));
      }
      summary["autoencoder"] = evaluate_method(cfg, "autoencoder", ae_records, &instance_csv,
                                               &user_csv);
    }

    write_file((fs::path(cfg.out_dir) / "instance_report.csv").string(), instance_csv);
    write_file((fs::path(cfg.out_dir) / "user_report.csv").string(), user_csv);
    return summary;
  });
}

RunResult run_pipeline(const RunConfig& cfg) {
  if (cfg.data_dir.empty() || cfg.out_dir.empty()) {
    fail(ErrorKind::ConfigError, "data_dir and out_dir are required");
  }

  const std::size_t n_events = stage_ingest(cfg);
  stage_featurize(cfg);
  stage_select_transforms(cfg);
  stage_train(cfg);
  stage_score(cfg);
  const nlohmann::json evaluation = stage_evaluate(cfg);

  nlohmann::json summary;
  summary["config"] = cfg.to_json();
  summary["config_hash"] = cfg.config_hash();
  summary["events_total"] = n_events;
  {
    nlohmann::json ingest_manifest =
        nlohmann::json::parse(read_file((fs::path(cfg.out_dir) / "ingest_manifest.json").string()));
    summary["input_hash"] = ingest_manifest.at("input_hash");
    nlohmann::json train_manifest =
        nlohmann::json::parse(read_file((fs::path(cfg.out_dir) / "train_manifest.json").string()));
    summary["users_trained"] = train_manifest.at("users");
    summary["users_skipped"] = train_manifest.at("skipped");
    summary["transform_count"] = train_manifest.at("transform_count");
  }
  summary["evaluation"] = evaluation;

  RunResult result;
  result.summary_hash = fnv1a_hex(summary.dump());
  summary["summary_hash"] = result.summary_hash;
  result.summary = summary;
  write_file((fs::path(cfg.out_dir) / "run_summary.json").string(), summary.dump(2) + "\n");
  return result;
}

std::vector<double> default_kappa_grid() {
  // 5% to 20% in 1.5% steps; the full arithmetic grid has 11 points.
  std::vector<double> grid;
  for (double v = 5.0; v <= 20.0 + 1e-9; v += 1.5) grid.push_back(v / 100.0);
  return grid;
}

nlohmann::json sweep(const RunConfig& cfg, const std::string& parameter,
                     const std::vector<double>& grid) {
  return with_stage("sweep", [&]() -> nlohmann::json {
    if (parameter != "tau" && parameter != "kappa") {
      fail(ErrorKind::ConfigError, "sweep parameter must be tau or kappa");
    }
    const auto records = read_scores_csv(cfg);

    std::map<std::string, std::vector<const InstanceRecord*>> train_per_user;
    std::vector<InstanceRecord> test_records;
    for (const InstanceRecord& rec : records) {
      if (rec.is_train) train_per_user[rec.user].push_back(&rec);
      else test_records.push_back(rec);
    }
    for (const InstanceRecord& rec : test_records) {
      if (rec.label < 0) fail(ErrorKind::MissingLabels, "sweep requires labels");
    }

    nlohmann::json rows = nlohmann::json::array();
    for (double value : grid) {
      std::vector<InstanceRecord> flagged = test_records;
      double kappa = cfg.kappa;
      if (parameter == "tau") {
        std::map<std::string, double> lambdas;
        for (const auto& [user, recs] : train_per_user) {
          std::vector<double> scores;
          bool any_cal = false;
          for (const auto* r : recs) any_cal |= r->is_calibration;
          for (const auto* r : recs) {
            if (!any_cal || r->is_calibration) scores.push_back(r->score);
          }
          lambdas[user] = fit_threshold(scores, value);
        }
        for (InstanceRecord& rec : flagged) {
          rec.lambda = lambdas.at(rec.user);
          rec.flagged = rec.score >= rec.lambda;
        }
      } else {
        kappa = value;
      }
      const auto decisions = user_decisions(flagged, kappa);
      for (InstanceRecord& rec : flagged) rec.score = rec.zscore;
      const EvalReport report = build_report(flagged, decisions);
      nlohmann::json row;
      row["parameter"] = parameter;
      row["value"] = value;
      row["instance_f1"] = report.instance.rates.f1;
      row["user_f1"] = report.user.rates.f1;
      row["instance_auroc"] = report.instance.auroc;
      row["user_auroc"] = report.user.auroc;
      rows.push_back(std::move(row));
    }
    return rows;
  });
}

std::string sweep_csv(const nlohmann::json& rows) {
  std::string out = "parameter,value,instance_f1,user_f1,instance_auroc,user_auroc\n";
  for (const auto& row : rows) {
    out += join_csv_row({row.at("parameter").get<std::string>(),
                         number_str(row.at("value").get<double>()),
                         format_percent(row.at("instance_f1").get<double>()),
                         format_percent(row.at("user_f1").get<double>()),
                         format_percent(row.at("instance_auroc").get<double>()),
                         format_percent(row.at("user_auroc").get<double>())});
    out.push_back('\n');
  }
  return out;
}

}  // namespace itd
