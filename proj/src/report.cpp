#include "itd/report.hpp"

#include <algorithm>
#include <cstdio>

#include "itd/csv.hpp"
#include "itd/error.hpp"

namespace itd {

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

EvalReport build_report(const std::vector<InstanceRecord>& test_records,
                        const std::vector<UserDecision>& decisions) {
  if (test_records.empty()) fail(ErrorKind::EmptyInput, "no test records to evaluate");

  std::vector<int> labels;
  std::vector<bool> flags;
  std::vector<double> scores;
  labels.reserve(test_records.size());
  for (const InstanceRecord& rec : test_records) {
    if (rec.label < 0) {
      fail(ErrorKind::MissingLabels,
           "test instance without ground truth: " + rec.user + " @ " +
               format_iso_datetime(rec.window_start));
    }
    labels.push_back(rec.label);
    flags.push_back(rec.flagged);
    scores.push_back(rec.score);
  }

  EvalReport report;
  report.instance.counts = confusion(labels, flags);
  report.instance.rates = rate_metrics(report.instance.counts);
  report.instance.auroc = auroc(scores, labels);
  report.instance.evaluated = test_records.size();

  std::vector<int> user_labels;
  std::vector<bool> user_flags;
  std::vector<double> user_scores;
  for (const UserDecision& d : decisions) {
    if (d.label < 0) fail(ErrorKind::MissingLabels, "user without ground truth: " + d.user);
    user_labels.push_back(d.label);
    user_flags.push_back(d.flagged);
    user_scores.push_back(d.flagged_proportion);
  }
  report.user.counts = confusion(user_labels, user_flags);
  report.user.rates = rate_metrics(report.user.counts);
  report.user.auroc = auroc(user_scores, user_labels);
  report.user.evaluated = decisions.size();
  return report;
}

namespace {

std::string level_csv(const LevelReport& r, const std::string& method, Granularity g,
                      const char* level) {
  std::string out = join_csv_row({method, level, granularity_name(g), std::to_string(r.evaluated),
                       std::to_string(r.counts.tp), std::to_string(r.counts.fp),
                       std::to_string(r.counts.fn), std::to_string(r.counts.tn),
                       format_percent(r.rates.dr), format_percent(r.rates.pr),
                       format_percent(r.rates.fpr), format_percent(r.rates.f1),
                       format_percent(r.auroc)});
  out.push_back('\n');
  return out;
}

}  // namespace

const char* report_csv_header() { return "method,level,granularity,n,tp,fp,fn,tn,dr,pr,fpr,f1,auroc\n"; }

std::string instance_report_csv(const LevelReport& r, const std::string& method, Granularity g) {
  return level_csv(r, method, g, "instance");
}

std::string user_report_csv(const LevelReport& r, const std::string& method, Granularity g) {
  return level_csv(r, method, g, "user");
}

std::string trend_csv(const std::vector<InstanceRecord>& user_records) {
  std::string out = "window_start,split,score,lambda,flagged,label,marker\n";
  char score_buf[48];
  for (const InstanceRecord& rec : user_records) {
    const char* marker = "-";
    if (!rec.is_train && rec.label >= 0) {
      if (rec.flagged && rec.label > 0) marker = "TP";
      else if (rec.flagged && rec.label == 0) marker = "FP";
      else if (!rec.flagged && rec.label > 0) marker = "FN";
      else marker = "TN";
    }
    std::snprintf(score_buf, sizeof(score_buf), "%.6f", rec.score);
    std::string lambda_buf = "";
    if (!rec.is_train) {
      char tmp[48];
      std::snprintf(tmp, sizeof(tmp), "%.6f", rec.lambda);
      lambda_buf = tmp;
    }
    out += join_csv_row({format_iso_datetime(rec.window_start), rec.is_train ? "train" : "test",
                         score_buf, lambda_buf, rec.flagged ? "1" : "0",
                         rec.label < 0 ? "" : std::to_string(rec.label), marker});
    out.push_back('\n');
  }
  return out;
}

std::string scores_csv(const std::vector<InstanceRecord>& records) {
  std::string out = "user,granularity,window_start,split,score,lambda,flagged,label,zscore\n";
  char score_buf[48], lambda_buf[48], z_buf[48];
  for (const InstanceRecord& rec : records) {
    std::snprintf(score_buf, sizeof(score_buf), "%.9g", rec.score);
    std::snprintf(lambda_buf, sizeof(lambda_buf), "%.9g", rec.lambda);
    std::snprintf(z_buf, sizeof(z_buf), "%.9g", rec.zscore);
    const char* split = rec.is_train ? (rec.is_calibration ? "cal" : "train") : "test";
    out += join_csv_row({rec.user, granularity_name(rec.granularity),
                         format_iso_datetime(rec.window_start), split,
                         score_buf, lambda_buf, rec.flagged ? "1" : "0",
                         rec.label < 0 ? "" : std::to_string(rec.label), z_buf});
    out.push_back('\n');
  }
  return out;
}

}  // namespace itd
