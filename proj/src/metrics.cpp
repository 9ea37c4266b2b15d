#include "itd/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "itd/error.hpp"

namespace itd {

ConfusionCounts confusion(const std::vector<int>& labels, const std::vector<bool>& flags) {
  if (labels.size() != flags.size()) {
    fail(ErrorKind::LengthMismatch, "labels size " + std::to_string(labels.size()) +
                                        " != flags size " + std::to_string(flags.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool positive = labels[i] > 0;
    if (positive && flags[i]) ++c.tp;
    else if (!positive && flags[i]) ++c.fp;
    else if (positive && !flags[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

RateMetrics rate_metrics(const ConfusionCounts& c) {
  RateMetrics m;
  if (c.tp + c.fn > 0) {
    m.dr = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  } else {
    m.diagnostics.push_back("DR undefined: no positive instances");
  }
  if (c.tp + c.fp > 0) {
    m.pr = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  } else {
    m.diagnostics.push_back("PR undefined: no flagged instances");
  }
  if (c.tn + c.fp > 0) {
    m.fpr = 100.0 * static_cast<double>(c.fp) / static_cast<double>(c.tn + c.fp);
  } else {
    m.diagnostics.push_back("FPR undefined: no negative instances");
  }
  if (m.pr + m.dr > 0.0) {
    m.f1 = 2.0 * m.pr * m.dr / (m.pr + m.dr);
  } else {
    m.diagnostics.push_back("F1 undefined: PR + DR is zero");
  }
  return m;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    fail(ErrorKind::LengthMismatch, "scores/labels size mismatch");
  }
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l > 0 ? 1 : 0;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorKind::SingleClass, "AUROC needs both classes present");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie groups keep the statistic exact.
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }

  double rank_sum_pos = 0.0;
  for (std::size_t idx = 0; idx < labels.size(); ++idx) {
    if (labels[idx] > 0) rank_sum_pos += rank[idx];
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return 100.0 * u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace itd
