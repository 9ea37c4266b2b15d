#pragma once

#include <string>
#include <vector>

#include "itd/events.hpp"

namespace itd {

// Suffix/keyword categorization. Only filenames and url domains are examined,
// never content.
struct Categorizer {
  std::vector<std::string> doc_suffixes = {".doc", ".docx", ".pdf", ".txt"};
  std::vector<std::string> exe_suffixes = {".exe", ".dll", ".bat", ".sh"};
  std::vector<std::string> job_keywords = {"job", "career", "hire", "recruit"};
  std::vector<std::string> leak_keywords = {"wikileaks"};

  bool is_doc(const std::string& filename) const;
  bool is_exe(const std::string& filename) const;
  bool is_job(const std::string& url) const;
  bool is_leak(const std::string& url) const;
};

enum class Indicator {
  LogonTimes,
  FileOperTimes,
  DocOperTimes,
  ExeOperTimes,
  HttpOperTimes,
  JobOperTimes,
  LeakOperTimes,
  EmailOperTimes,
  EmailMeanSizeAtts,
  UsbOperTimes,
};

enum class TimeFrame { Workhour, Afterhour, Weekend, Whole };
enum class PcScope { Any, Own, Other };
enum class ComponentKind { Count, Mean, SessionStat };

enum class SessionStat {
  None,
  DurationHours,
  StartHour,
  IsAfterhourStart,
  IsWeekend,
  IsOwnPc,
  DistinctPcs,
};

struct CatalogComponent {
  std::string name;
  ComponentKind kind = ComponentKind::Count;
  Indicator indicator = Indicator::LogonTimes;
  TimeFrame frame = TimeFrame::Whole;
  PcScope scope = PcScope::Any;
  SessionStat stat = SessionStat::None;
};

// Fixed component enumeration per granularity: 40 (week), 28 (day), 16
// (session). The ordering is pinned by the manifest so stored vectors stay
// stable across versions.
struct FeatureCatalog {
  Granularity granularity = Granularity::Day;
  std::vector<CatalogComponent> components;
  Categorizer categorizer;

  static FeatureCatalog standard(Granularity g, Categorizer cats = {});
  static std::size_t expected_dimension(Granularity g);

  std::size_t dimension() const { return components.size(); }
  std::string manifest_json() const;
};

struct FeatureVector {
  std::string user;
  Granularity granularity = Granularity::Day;
  Timestamp window_start = 0;
  std::vector<double> values;
  int label = -1;  // ground truth for evaluation only; -1 unknown
};

FeatureVector extract_features(const Bucket& bucket, const UserProfile& profile,
                               const FeatureCatalog& catalog);

// Per-feature min/max fitted on training-period vectors only.
struct Normalizer {
  Granularity granularity = Granularity::Day;
  std::vector<double> min;
  std::vector<double> max;
};

Normalizer fit_normalizer(const std::vector<FeatureVector>& train_vectors);

// (v - min) / (max - min); constant features map to 0; output clamps to [0,1].
FeatureVector normalize(const FeatureVector& v, const Normalizer& n);

// First ceil(train_fraction * n) windows go to train, the rest to test. Input
// must already be sorted by window_start (ties keep input order).
std::pair<std::vector<FeatureVector>, std::vector<FeatureVector>> chronological_split(
    const std::vector<FeatureVector>& vectors_of_user, double train_fraction,
    std::size_t min_count = 10);

// own_pc = modal pc over training-period logons, ties broken lexicographically.
// Falls back to the modal pc over all events when the user never logs on.
UserProfile build_profile(const std::string& user, const std::vector<LogEvent>& train_events);

}  // namespace itd
