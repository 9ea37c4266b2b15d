#pragma once

#include <map>
#include <string>
#include <vector>

#include "itd/events.hpp"
#include "itd/metrics.hpp"

namespace itd {

struct InstanceRecord {
  std::string user;
  Granularity granularity = Granularity::Day;
  Timestamp window_start = 0;
  double score = 0.0;
  // Score standardized against the user's training distribution; per-user
  // models do not share a raw scale, so pooled rankings use this.
  double zscore = 0.0;
  double lambda = 0.0;
  bool flagged = false;
  int label = -1;  // -1 unknown
  bool is_train = false;
  // Training window held out of the classifier fit; lambda comes from these.
  bool is_calibration = false;
};

struct UserDecision {
  std::string user;
  bool flagged = false;
  double flagged_proportion = 0.0;
  int label = -1;
  std::size_t instances = 0;
};

struct LevelReport {
  ConfusionCounts counts;
  RateMetrics rates;
  double auroc = 0.0;
  std::size_t evaluated = 0;
};

struct EvalReport {
  LevelReport instance;
  LevelReport user;
};

// Instance metrics over all test records; user metrics over the per-user
// decisions. A user's ground truth is malicious when any of their test
// instances is malicious. User AUROC ranks users by flagged proportion.
// Throws MissingLabels when any test record lacks a label.
EvalReport build_report(const std::vector<InstanceRecord>& test_records,
                        const std::vector<UserDecision>& decisions);

const char* report_csv_header();
std::string instance_report_csv(const LevelReport& r, const std::string& method,
                                Granularity g);
std::string user_report_csv(const LevelReport& r, const std::string& method, Granularity g);

// Per-user score trend rows (train + test) with TP/FP/FN/TN markers on the
// test side, for plotting.
std::string trend_csv(const std::vector<InstanceRecord>& user_records);

std::string scores_csv(const std::vector<InstanceRecord>& records);

// Percent with two decimals, the report convention.
std::string format_percent(double value);

}  // namespace itd
