#include "itd/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "itd/error.hpp"

namespace itd {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool has_suffix(const std::string& filename, const std::vector<std::string>& suffixes) {
  const std::string f = lower(filename);
  for (const std::string& suf : suffixes) {
    if (f.size() >= suf.size() && f.compare(f.size() - suf.size(), suf.size(), suf) == 0) {
      return true;
    }
  }
  return false;
}

bool has_keyword(const std::string& url, const std::vector<std::string>& keywords) {
  const std::string u = lower(url);
  for (const std::string& kw : keywords) {
    if (u.find(kw) != std::string::npos) return true;
  }
  return false;
}

const char* frame_suffix(TimeFrame f) {
  switch (f) {
    case TimeFrame::Workhour: return "workhour";
    case TimeFrame::Afterhour: return "afterhour";
    case TimeFrame::Weekend: return "weekend";
    case TimeFrame::Whole: return "whole";
  }
  return "whole";
}

const char* indicator_name(Indicator ind) {
  switch (ind) {
    case Indicator::LogonTimes: return "logon_times";
    case Indicator::FileOperTimes: return "file_oper_times";
    case Indicator::DocOperTimes: return "doc_oper_times";
    case Indicator::ExeOperTimes: return "exe_oper_times";
    case Indicator::HttpOperTimes: return "http_oper_times";
    case Indicator::JobOperTimes: return "job_oper_times";
    case Indicator::LeakOperTimes: return "leak_oper_times";
    case Indicator::EmailOperTimes: return "email_oper_times";
    case Indicator::EmailMeanSizeAtts: return "email_mean_size_atts";
    case Indicator::UsbOperTimes: return "usb_oper_times";
  }
  return "unknown";
}

constexpr Indicator kAllIndicators[] = {
    Indicator::LogonTimes,     Indicator::FileOperTimes, Indicator::DocOperTimes,
    Indicator::ExeOperTimes,   Indicator::HttpOperTimes, Indicator::JobOperTimes,
    Indicator::LeakOperTimes,  Indicator::EmailOperTimes, Indicator::EmailMeanSizeAtts,
    Indicator::UsbOperTimes,
};

// The eight count indicators tracked on non-assigned pcs at day level.
constexpr Indicator kOtherPcIndicators[] = {
    Indicator::LogonTimes,    Indicator::FileOperTimes, Indicator::DocOperTimes,
    Indicator::ExeOperTimes,  Indicator::HttpOperTimes, Indicator::JobOperTimes,
    Indicator::LeakOperTimes, Indicator::UsbOperTimes,
};

bool in_frame(const LogEvent& ev, TimeFrame frame) {
  switch (frame) {
    case TimeFrame::Workhour: return is_workhour(ev.ts);
    case TimeFrame::Afterhour: return is_afterhour(ev.ts);
    case TimeFrame::Weekend: return is_weekend(ev.ts);
    case TimeFrame::Whole: return true;
  }
  return true;
}

bool matches_indicator(const LogEvent& ev, Indicator ind, const Categorizer& cats) {
  switch (ind) {
    case Indicator::LogonTimes: return ev.kind == EventKind::Logon;
    case Indicator::FileOperTimes: return ev.kind == EventKind::FileOp;
    case Indicator::DocOperTimes: {
      if (ev.kind != EventKind::FileOp) return false;
      auto it = ev.payload.find("filename");
      return it != ev.payload.end() && cats.is_doc(it->second);
    }
    case Indicator::ExeOperTimes: {
      if (ev.kind != EventKind::FileOp) return false;
      auto it = ev.payload.find("filename");
      return it != ev.payload.end() && cats.is_exe(it->second);
    }
    case Indicator::HttpOperTimes: return ev.kind == EventKind::Http;
    case Indicator::JobOperTimes: {
      if (ev.kind != EventKind::Http) return false;
      auto it = ev.payload.find("url");
      return it != ev.payload.end() && cats.is_job(it->second);
    }
    case Indicator::LeakOperTimes: {
      if (ev.kind != EventKind::Http) return false;
      auto it = ev.payload.find("url");
      return it != ev.payload.end() && cats.is_leak(it->second);
    }
    case Indicator::EmailOperTimes:
    case Indicator::EmailMeanSizeAtts: return ev.kind == EventKind::Email;
    case Indicator::UsbOperTimes: return ev.kind == EventKind::DeviceConnect;
  }
  return false;
}

bool in_scope(const LogEvent& ev, PcScope scope, const UserProfile& profile) {
  switch (scope) {
    case PcScope::Any: return true;
    case PcScope::Own: return ev.pc == profile.own_pc;
    case PcScope::Other: return ev.pc != profile.own_pc;
  }
  return true;
}

double evaluate_component(const CatalogComponent& comp, const Bucket& bucket,
                          const UserProfile& profile, const Categorizer& cats) {
  if (comp.kind == ComponentKind::SessionStat) {
    switch (comp.stat) {
      case SessionStat::DurationHours:
        return bucket.duration_hours();
      case SessionStat::StartHour:
        return hour_of_day(bucket.window_start);
      case SessionStat::IsAfterhourStart:
        return is_afterhour(bucket.window_start) ? 1.0 : 0.0;
      case SessionStat::IsWeekend:
        return is_weekend(bucket.window_start) ? 1.0 : 0.0;
      case SessionStat::IsOwnPc: {
        const std::string& pc =
            bucket.pc.empty() && !bucket.events.empty() ? bucket.events.front().pc : bucket.pc;
        return pc == profile.own_pc ? 1.0 : 0.0;
      }
      case SessionStat::DistinctPcs: {
        std::set<std::string> pcs;
        for (const LogEvent& ev : bucket.events) pcs.insert(ev.pc);
        return static_cast<double>(pcs.size());
      }
      case SessionStat::None:
        break;
    }
    return 0.0;
  }

  if (comp.kind == ComponentKind::Mean) {
    // Mean attachment bytes per email in frame/scope; 0 when no email.
    double total = 0.0;
    std::size_t n = 0;
    for (const LogEvent& ev : bucket.events) {
      if (!matches_indicator(ev, comp.indicator, cats)) continue;
      if (!in_frame(ev, comp.frame)) continue;
      if (!in_scope(ev, comp.scope, profile)) continue;
      total += static_cast<double>(ev.payload_long("attachment_total_size_bytes"));
      ++n;
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
  }

  std::size_t count = 0;
  for (const LogEvent& ev : bucket.events) {
    if (!matches_indicator(ev, comp.indicator, cats)) continue;
    if (!in_frame(ev, comp.frame)) continue;
    if (!in_scope(ev, comp.scope, profile)) continue;
    ++count;
  }
  return static_cast<double>(count);
}

}  // namespace

bool Categorizer::is_doc(const std::string& filename) const {
  return has_suffix(filename, doc_suffixes);
}
bool Categorizer::is_exe(const std::string& filename) const {
  return has_suffix(filename, exe_suffixes);
}
bool Categorizer::is_job(const std::string& url) const { return has_keyword(url, job_keywords); }
bool Categorizer::is_leak(const std::string& url) const { return has_keyword(url, leak_keywords); }

std::size_t FeatureCatalog::expected_dimension(Granularity g) {
  switch (g) {
    case Granularity::Week: return 40;
    case Granularity::Day: return 28;
    case Granularity::Session: return 16;
  }
  return 0;
}

FeatureCatalog FeatureCatalog::standard(Granularity g, Categorizer cats) {
  FeatureCatalog cat;
  cat.granularity = g;
  cat.categorizer = std::move(cats);

  auto component_kind = [](Indicator ind) {
    return ind == Indicator::EmailMeanSizeAtts ? ComponentKind::Mean : ComponentKind::Count;
  };

  switch (g) {
    case Granularity::Week: {
      // 10 indicators x {workhour, afterhour, weekend, whole}; pc scope
      // collapses to whole at week level.
      for (Indicator ind : kAllIndicators) {
        for (TimeFrame frame : {TimeFrame::Workhour, TimeFrame::Afterhour, TimeFrame::Weekend,
                                TimeFrame::Whole}) {
          CatalogComponent c;
          c.name = std::string(indicator_name(ind)) + "_" + frame_suffix(frame);
          c.kind = component_kind(ind);
          c.indicator = ind;
          c.frame = frame;
          c.scope = PcScope::Any;
          cat.components.push_back(std::move(c));
        }
      }
      break;
    }
    case Granularity::Day: {
      // 10 indicators x {workhour, afterhour} plus eight non-assigned-pc counts.
      for (Indicator ind : kAllIndicators) {
        for (TimeFrame frame : {TimeFrame::Workhour, TimeFrame::Afterhour}) {
          CatalogComponent c;
          c.name = std::string(indicator_name(ind)) + "_" + frame_suffix(frame);
          c.kind = component_kind(ind);
          c.indicator = ind;
          c.frame = frame;
          c.scope = PcScope::Any;
          cat.components.push_back(std::move(c));
        }
      }
      for (Indicator ind : kOtherPcIndicators) {
        CatalogComponent c;
        c.name = std::string(indicator_name(ind)) + "_otherpc";
        c.kind = ComponentKind::Count;
        c.indicator = ind;
        c.frame = TimeFrame::Whole;
        c.scope = PcScope::Other;
        cat.components.push_back(std::move(c));
      }
      break;
    }
    case Granularity::Session: {
      for (Indicator ind : kAllIndicators) {
        CatalogComponent c;
        c.name = std::string(indicator_name(ind)) + "_session";
        c.kind = component_kind(ind);
        c.indicator = ind;
        c.frame = TimeFrame::Whole;
        c.scope = PcScope::Any;
        cat.components.push_back(std::move(c));
      }
      auto stat = [&](const char* name, SessionStat s) {
        CatalogComponent c;
        c.name = name;
        c.kind = ComponentKind::SessionStat;
        c.stat = s;
        cat.components.push_back(std::move(c));
      };
      stat("session_duration_hours", SessionStat::DurationHours);
      stat("start_hour", SessionStat::StartHour);
      stat("is_afterhour_start", SessionStat::IsAfterhourStart);
      stat("is_weekend", SessionStat::IsWeekend);
      stat("is_own_pc", SessionStat::IsOwnPc);
      stat("n_distinct_pcs", SessionStat::DistinctPcs);
      break;
    }
  }

  if (cat.components.size() != expected_dimension(g)) {
    fail(ErrorKind::CatalogMismatch, "catalog dimension " + std::to_string(cat.components.size()) +
                                         " != expected " +
                                         std::to_string(expected_dimension(g)));
  }
  return cat;
}

std::string FeatureCatalog::manifest_json() const {
  nlohmann::json j;
  j["granularity"] = granularity_name(granularity);
  j["dimension"] = components.size();
  nlohmann::json comps = nlohmann::json::array();
  for (const CatalogComponent& c : components) {
    nlohmann::json e;
    e["name"] = c.name;
    e["kind"] = c.kind == ComponentKind::Count ? "count"
                : c.kind == ComponentKind::Mean ? "mean"
                                                : "session_stat";
    comps.push_back(std::move(e));
  }
  j["components"] = std::move(comps);
  nlohmann::json cats;
  cats["doc_suffixes"] = categorizer.doc_suffixes;
  cats["exe_suffixes"] = categorizer.exe_suffixes;
  cats["job_keywords"] = categorizer.job_keywords;
  cats["leak_keywords"] = categorizer.leak_keywords;
  j["categorizer"] = std::move(cats);
  return j.dump(2);
}

FeatureVector extract_features(const Bucket& bucket, const UserProfile& profile,
                               const FeatureCatalog& catalog) {
  if (bucket.granularity != catalog.granularity) {
    fail(ErrorKind::CatalogMismatch,
         std::string("bucket granularity ") + granularity_name(bucket.granularity) +
             " != catalog granularity " + granularity_name(catalog.granularity));
  }
  if (catalog.dimension() != FeatureCatalog::expected_dimension(catalog.granularity)) {
    fail(ErrorKind::CatalogMismatch, "catalog dimension mismatch");
  }

  FeatureVector v;
  v.user = bucket.user;
  v.granularity = bucket.granularity;
  v.window_start = bucket.window_start;
  v.values.reserve(catalog.dimension());
  for (const CatalogComponent& comp : catalog.components) {
    v.values.push_back(evaluate_component(comp, bucket, profile, catalog.categorizer));
  }
  return v;
}

Normalizer fit_normalizer(const std::vector<FeatureVector>& train_vectors) {
  if (train_vectors.empty()) fail(ErrorKind::EmptyTrainingSet, "no training vectors");
  const std::size_t dim = train_vectors.front().values.size();
  Normalizer n;
  n.granularity = train_vectors.front().granularity;
  n.min.assign(dim, 0.0);
  n.max.assign(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) {
    n.min[j] = n.max[j] = train_vectors.front().values[j];
  }
  for (const FeatureVector& v : train_vectors) {
    if (v.values.size() != dim) fail(ErrorKind::LengthMismatch, "inconsistent vector dimensions");
    for (std::size_t j = 0; j < dim; ++j) {
      n.min[j] = std::min(n.min[j], v.values[j]);
      n.max[j] = std::max(n.max[j], v.values[j]);
    }
  }
  return n;
}

FeatureVector normalize(const FeatureVector& v, const Normalizer& n) {
  if (v.values.size() != n.min.size()) {
    fail(ErrorKind::LengthMismatch, "vector dimension does not match normalizer");
  }
  FeatureVector out = v;
  for (std::size_t j = 0; j < v.values.size(); ++j) {
    const double range = n.max[j] - n.min[j];
    double x = range <= 0.0 ? 0.0 : (v.values[j] - n.min[j]) / range;
    out.values[j] = std::clamp(x, 0.0, 1.0);
  }
  return out;
}

std::pair<std::vector<FeatureVector>, std::vector<FeatureVector>> chronological_split(
    const std::vector<FeatureVector>& vectors_of_user, double train_fraction,
    std::size_t min_count) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    fail(ErrorKind::ConfigError, "train_fraction must be in (0,1)");
  }
  const std::size_t n = vectors_of_user.size();
  const auto n_train = static_cast<std::size_t>(
      std::ceil(train_fraction * static_cast<double>(n)));
  std::vector<FeatureVector> train(vectors_of_user.begin(),
                                   vectors_of_user.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<FeatureVector> test(vectors_of_user.begin() + static_cast<std::ptrdiff_t>(n_train),
                                  vectors_of_user.end());
  if (train.size() < min_count || test.size() < min_count) {
    fail(ErrorKind::TooFewInstances,
         "split " + std::to_string(train.size()) + "/" + std::to_string(test.size()) +
             " below minimum " + std::to_string(min_count));
  }
  return {std::move(train), std::move(test)};
}

UserProfile build_profile(const std::string& user, const std::vector<LogEvent>& train_events) {
  UserProfile p;
  p.user = user;
  std::map<std::string, std::size_t> logon_pcs;
  std::map<std::string, std::size_t> any_pcs;
  bool first = true;
  for (const LogEvent& ev : train_events) {
    if (ev.user != user) continue;
    if (first || ev.ts < p.first_seen) p.first_seen = ev.ts;
    if (first || ev.ts > p.last_seen) p.last_seen = ev.ts;
    first = false;
    ++any_pcs[ev.pc];
    if (ev.kind == EventKind::Logon) ++logon_pcs[ev.pc];
  }
  const auto& counts = logon_pcs.empty() ? any_pcs : logon_pcs;
  std::size_t best = 0;
  for (const auto& [pc, cnt] : counts) {
    // std::map iterates lexicographically, so ties keep the smaller pc id.
    if (cnt > best) {
      best = cnt;
      p.own_pc = pc;
    }
  }
  return p;
}

}  // namespace itd
