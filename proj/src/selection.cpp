#include "itd/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "itd/csv.hpp"
#include "itd/error.hpp"
#include "itd/model.hpp"

namespace itd {

namespace {

struct ProbeSample {
  const BehaviorImage* image;
  int label;
};

// Logistic regression over flattened pixels, full-batch gradient descent.
// Deterministic: zero init, fixed epoch count.
double logistic_probe_accuracy(const std::vector<ProbeSample>& train,
                               const std::vector<ProbeSample>& eval, const ProbeConfig& cfg) {
  const std::size_t dim = train.front().image->pixels.size();
  std::vector<double> w(dim, 0.0);
  double bias = 0.0;

  std::vector<double> grad(dim);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gbias = 0.0;
    for (const ProbeSample& s : train) {
      const auto& px = s.image->pixels;
      double z = bias;
      for (std::size_t i = 0; i < dim; ++i) z += w[i] * px[i];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double err = p - static_cast<double>(s.label);
      for (std::size_t i = 0; i < dim; ++i) grad[i] += err * px[i];
      gbias += err;
    }
    const double scale = cfg.learning_rate / static_cast<double>(train.size());
    for (std::size_t i = 0; i < dim; ++i) w[i] -= scale * grad[i];
    bias -= scale * gbias;
  }

  std::size_t correct = 0;
  for (const ProbeSample& s : eval) {
    const auto& px = s.image->pixels;
    double z = bias;
    for (std::size_t i = 0; i < dim; ++i) z += w[i] * px[i];
    const int predicted = z >= 0.0 ? 1 : 0;
    if (predicted == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

double conv_probe_accuracy(const std::vector<ProbeSample>& train,
                           const std::vector<ProbeSample>& eval, const ProbeConfig& cfg) {
  SelfLabelledSet set;
  set.source_count = train.size();
  set.transform_count = 2;
  for (const ProbeSample& s : train) {
    set.items.push_back({*s.image, s.label});
  }
  auto model =
      build_classifier<float>(train.front().image->side, 2, ArchKind::Tiny, cfg.seed);
  TrainConfig tc;
  tc.epochs = cfg.conv_epochs;
  tc.seed = cfg.seed;
  fit_classifier(model, set, tc);

  std::size_t correct = 0;
  for (const ProbeSample& s : eval) {
    const auto p = predict_softmax(model, *s.image);
    const int predicted = p[1] >= p[0] ? 1 : 0;
    if (predicted == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

}  // namespace

PairAccuracy pairwise_accuracy(const std::vector<BehaviorImage>& images,
                               const TransformSpec& spec_i, const TransformSpec& spec_j,
                               const ProbeConfig& probe) {
  if (images.size() < probe.min_images) {
    fail(ErrorKind::InsufficientData, "need >= " + std::to_string(probe.min_images) +
                                          " images, got " + std::to_string(images.size()));
  }
  if (spec_i.index == spec_j.index) {
    fail(ErrorKind::ConfigError, "pairwise accuracy needs two distinct transforms");
  }

  std::vector<BehaviorImage> class0, class1;
  class0.reserve(images.size());
  class1.reserve(images.size());
  for (const BehaviorImage& img : images) {
    class0.push_back(apply_transform(img, spec_i));
    class1.push_back(apply_transform(img, spec_j));
  }

  // Per-class chronological split keeps the held-out set balanced.
  const auto n_eval = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(probe.eval_fraction * images.size())));
  const std::size_t n_train = images.size() - n_eval;

  std::vector<ProbeSample> train, eval;
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto& dst = i < n_train ? train : eval;
    dst.push_back({&class0[i], 0});
    dst.push_back({&class1[i], 1});
  }

  PairAccuracy result;
  result.i = std::max(spec_i.index, spec_j.index);
  result.j = std::min(spec_i.index, spec_j.index);
  result.n_eval = eval.size();
  result.accuracy = probe.use_conv_model ? conv_probe_accuracy(train, eval, probe)
                                         : logistic_probe_accuracy(train, eval, probe);
  return result;
}

std::vector<PairAccuracy> all_pair_accuracies(const std::vector<BehaviorImage>& images,
                                              const std::vector<TransformSpec>& candidates,
                                              const ProbeConfig& probe) {
  std::vector<PairAccuracy> out;
  out.reserve(candidates.size() * (candidates.size() - 1) / 2);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      out.push_back(pairwise_accuracy(images, candidates[i], candidates[j], probe));
    }
  }
  return out;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

std::vector<TransformSpec> prune(const std::vector<TransformSpec>& candidates,
                                 const std::vector<PairAccuracy>& pair_accuracies,
                                 double band_lo, double band_hi,
                                 std::vector<PruneRecord>* records) {
  const std::size_t n = candidates.size();
  if (pair_accuracies.size() != n * (n - 1) / 2) {
    fail(ErrorKind::ConfigError, "pair accuracies must cover all unordered pairs: want " +
                                     std::to_string(n * (n - 1) / 2) + ", got " +
                                     std::to_string(pair_accuracies.size()));
  }

  std::vector<int> position(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    if (candidates[p].index < 0 || static_cast<std::size_t>(candidates[p].index) >= n ||
        position[static_cast<std::size_t>(candidates[p].index)] != -1) {
      fail(ErrorKind::ConfigError, "candidate indices must be unique and dense");
    }
    position[static_cast<std::size_t>(candidates[p].index)] = static_cast<int>(p);
  }

  UnionFind uf(n);
  for (const PairAccuracy& pa : pair_accuracies) {
    if (pa.accuracy >= band_lo && pa.accuracy <= band_hi) {
      uf.unite(position[static_cast<std::size_t>(pa.i)],
               position[static_cast<std::size_t>(pa.j)]);
    }
  }

  // Winner per component: fewest active ops, ties to the lowest index.
  std::vector<int> winner(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    const int root = uf.find(static_cast<int>(p));
    if (winner[root] == -1) {
      winner[root] = static_cast<int>(p);
      continue;
    }
    const TransformSpec& cur = candidates[static_cast<std::size_t>(winner[root])];
    const TransformSpec& cand = candidates[p];
    if (cand.active_ops() < cur.active_ops() ||
        (cand.active_ops() == cur.active_ops() && cand.index < cur.index)) {
      winner[root] = static_cast<int>(p);
    }
  }

  std::vector<bool> keep(n, false);
  for (std::size_t p = 0; p < n; ++p) {
    keep[p] = winner[uf.find(static_cast<int>(p))] == static_cast<int>(p);
    if (candidates[p].is_identity()) keep[p] = true;
  }

  if (records) {
    std::vector<int> comp_size(n, 0);
    for (std::size_t p = 0; p < n; ++p) ++comp_size[static_cast<std::size_t>(uf.find(static_cast<int>(p)))];
    records->clear();
    for (std::size_t p = 0; p < n; ++p) {
      PruneRecord rec;
      rec.index = candidates[p].index;
      rec.kept = keep[p];
      const int root = uf.find(static_cast<int>(p));
      const bool grouped = comp_size[static_cast<std::size_t>(root)] > 1;
      if (keep[p] && candidates[p].is_identity()) rec.reason = "identity always kept";
      else if (keep[p] && grouped) rec.reason = "fewest operations in redundancy group";
      else if (keep[p]) rec.reason = "no redundant pair";
      else rec.reason = "redundant with transform " +
                        std::to_string(candidates[static_cast<std::size_t>(winner[root])].index);
      records->push_back(std::move(rec));
    }
  }

  std::vector<TransformSpec> survivors;
  for (std::size_t p = 0; p < n; ++p) {
    if (keep[p]) survivors.push_back(candidates[p]);
  }
  std::sort(survivors.begin(), survivors.end(),
            [](const TransformSpec& a, const TransformSpec& b) { return a.index < b.index; });
  for (std::size_t p = 0; p < survivors.size(); ++p) {
    survivors[p].index = static_cast<int>(p);
  }
  return survivors;
}

std::string selection_report_csv(const std::vector<PairAccuracy>& pairs,
                                 const std::vector<PruneRecord>& records, double band_lo,
                                 double band_hi) {
  std::string out = "record,i,j,accuracy,decision,reason\n";
  char buf[64];
  for (const PairAccuracy& pa : pairs) {
    const bool in_band = pa.accuracy >= band_lo && pa.accuracy <= band_hi;
    std::snprintf(buf, sizeof(buf), "%.4f", pa.accuracy);
    out += join_csv_row({"pair", std::to_string(pa.i), std::to_string(pa.j), buf,
                         in_band ? "redundant" : "distinct", ""});
    out.push_back('\n');
  }
  for (const PruneRecord& rec : records) {
    out += join_csv_row({"spec", std::to_string(rec.index), "", "",
                         rec.kept ? "kept" : "dropped", rec.reason});
    out.push_back('\n');
  }
  return out;
}

}  // namespace itd
