#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "itd/events.hpp"
#include "itd/model.hpp"
#include "itd/report.hpp"

namespace itd {

// End-to-end run configuration. Every field can come from a JSON config file
// and be overridden on the command line; the effective config is echoed into
// the run summary.
struct RunConfig {
  std::string data_dir;
  std::string out_dir;
  Granularity granularity = Granularity::Day;
  double train_fraction = 0.7;
  std::size_t min_train = 10;
  std::size_t min_test = 10;
  double tau = 95.0;
  double kappa = 0.14;
  // Share of the training windows held out (chronological tail) to calibrate
  // lambda and the score statistics out of sample; 0 disables calibration.
  double calibration_fraction = 0.25;
  // Softmax floor used when collecting Dirichlet samples and scoring. Small
  // per-user training sets overfit the per-transform alphas, so the run
  // default keeps log-terms milder than the library floor.
  double softmax_clip = 1e-3;

  // geometric | simplified | full | explicit
  std::string transform_policy = "geometric";
  std::vector<int> explicit_transforms;  // indices into the full-144 enumeration
  bool prune_transforms = true;
  double band_lo = 0.45;
  double band_hi = 0.55;
  std::size_t selection_sample_cap = 128;
  std::size_t selection_min_images = 20;

  ArchKind arch = ArchKind::Tiny;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;
  bool with_baselines = true;
  std::string catalog_path;  // optional categorizer override JSON

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::string config_hash() const;
};

// Stage entry points; each reads its inputs from and writes its artifacts to
// cfg.out_dir so stages are independently rerunnable.
std::size_t stage_ingest(const RunConfig& cfg);
void stage_featurize(const RunConfig& cfg);
void stage_select_transforms(const RunConfig& cfg);
void stage_train(const RunConfig& cfg);
void stage_score(const RunConfig& cfg);
nlohmann::json stage_evaluate(const RunConfig& cfg);

struct RunResult {
  nlohmann::json summary;
  std::string summary_hash;
};

RunResult run_pipeline(const RunConfig& cfg);

// Re-thresholds persisted scores per grid point without retraining and
// reports F1 per value; parameter is "tau" or "kappa".
nlohmann::json sweep(const RunConfig& cfg, const std::string& parameter,
                     const std::vector<double>& grid);
std::vector<double> default_kappa_grid();  // 5% to 20%, step 1.5%

std::string sweep_csv(const nlohmann::json& rows);

}  // namespace itd
