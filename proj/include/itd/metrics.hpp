#pragma once

#include <string>
#include <vector>

namespace itd {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion(const std::vector<int>& labels, const std::vector<bool>& flags);

// DR, PR, FPR, F1 in percent. Division-by-zero cases come back as 0 with a
// diagnostic naming the degenerate denominator.
struct RateMetrics {
  double dr = 0.0;
  double pr = 0.0;
  double fpr = 0.0;
  double f1 = 0.0;
  std::vector<std::string> diagnostics;
};

RateMetrics rate_metrics(const ConfusionCounts& c);

// Mann-Whitney AUROC in percent: P(score_pos > score_neg) + 0.5 P(tie),
// computed with midranks so ties are exact. Throws SingleClass when only one
// class is present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace itd
