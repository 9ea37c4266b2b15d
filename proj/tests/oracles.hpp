#pragma once

// Test-only oracles, independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "itd/metrics.hpp"
#include "itd/scoring.hpp"

namespace oracles {

// Coordinate descent with a coarse-to-fine multiplicative grid, maximizing the
// same mean log-likelihood. Knows nothing about digamma inversion.
inline std::vector<double> dirichlet_grid_search(
    const std::vector<std::vector<double>>& samples, std::size_t k) {
  std::vector<double> alpha(k, 1.0);
  double best_ll = itd::dirichlet_mean_log_likelihood(samples, alpha);

  double factor = 8.0;
  for (int level = 0; level < 60 && factor > 1.0 + 1e-7; ++level) {
    for (std::size_t j = 0; j < k; ++j) {
      double best_value = alpha[j];
      for (int i = 0; i <= 20; ++i) {
        const double candidate =
            alpha[j] * std::pow(factor, static_cast<double>(i) / 10.0 - 1.0);
        if (candidate <= 0.0) continue;
        std::vector<double> trial = alpha;
        trial[j] = candidate;
        const double ll = itd::dirichlet_mean_log_likelihood(samples, trial);
        if (ll > best_ll) {
          best_ll = ll;
          best_value = candidate;
        }
      }
      alpha[j] = best_value;
    }
    factor = std::pow(factor, 0.8);
  }
  return alpha;
}

// Direct TP/FP/FN/TN recount.
inline itd::ConfusionCounts confusion_recount(const std::vector<int>& labels,
                                              const std::vector<bool>& flags) {
  itd::ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 0) {
      if (flags[i]) ++c.tp;
      else ++c.fn;
    } else {
      if (flags[i]) ++c.fp;
      else ++c.tn;
    }
  }
  return c;
}

// All-pairs Mann-Whitney statistic: wins + half ties over pos x neg pairs.
inline double auroc_all_pairs(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] <= 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] > 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return 100.0 * wins / static_cast<double>(pairs);
}

}  // namespace oracles
