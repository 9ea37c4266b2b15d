#pragma once

#include <vector>

#include "itd/imaging.hpp"

namespace itd {

struct PairAccuracy {
  int i = 0;  // i > j
  int j = 0;
  double accuracy = 0.0;
  std::size_t n_eval = 0;
};

struct ProbeConfig {
  std::size_t min_images = 20;
  double eval_fraction = 0.3;
  int epochs = 40;
  double learning_rate = 0.05;
  std::uint64_t seed = 7;
  // Opt-in: train the full convolutional model instead of the linear probe.
  bool use_conv_model = false;
  int conv_epochs = 10;
};

// Held-out accuracy of a fresh binary classifier distinguishing spec_i(x)
// from spec_j(x). The default probe is a logistic classifier over flattened
// pixels; the convolutional model is available behind the same contract.
PairAccuracy pairwise_accuracy(const std::vector<BehaviorImage>& images,
                               const TransformSpec& spec_i, const TransformSpec& spec_j,
                               const ProbeConfig& probe = {});

// All unordered pairs, evaluated in (i, j) order.
std::vector<PairAccuracy> all_pair_accuracies(const std::vector<BehaviorImage>& images,
                                              const std::vector<TransformSpec>& candidates,
                                              const ProbeConfig& probe = {});

struct PruneRecord {
  int index = 0;
  bool kept = true;
  std::string reason;
};

// Pairs whose accuracy falls inside [band_lo, band_hi] are redundant; within
// each connected component of the redundancy graph only the spec with the
// fewest active operations survives (ties to the lowest index). The identity
// is always kept. Survivors are re-indexed 0..K-1.
std::vector<TransformSpec> prune(const std::vector<TransformSpec>& candidates,
                                 const std::vector<PairAccuracy>& pair_accuracies,
                                 double band_lo, double band_hi,
                                 std::vector<PruneRecord>* records = nullptr);

// Selection report CSV: one row per pair, then one per candidate verdict.
std::string selection_report_csv(const std::vector<PairAccuracy>& pairs,
                                 const std::vector<PruneRecord>& records, double band_lo,
                                 double band_hi);

}  // namespace itd
