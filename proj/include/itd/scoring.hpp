#pragma once

#include <vector>

#include "itd/imaging.hpp"
#include "itd/model.hpp"

namespace itd {

double digamma(double x);
double trigamma(double x);
// Newton inversion of digamma; exact to ~1e-12 over the range used here.
double inverse_digamma(double y);

struct DirichletFitOptions {
  double tolerance = 1e-8;   // max |delta alpha| / alpha
  int max_iterations = 1000;
  double alpha_cap = 1e6;    // per component
};

struct DirichletFit {
  std::vector<double> alpha;
  int iterations = 0;
  double log_likelihood = 0.0;  // mean per sample at the returned alpha
  bool degenerate = false;      // zero empirical variance; cap applied
};

// Mean per-sample Dirichlet log-likelihood of `samples` at `alpha`.
double dirichlet_mean_log_likelihood(const std::vector<std::vector<double>>& samples,
                                     const std::vector<double>& alpha);

// Maximum-likelihood alpha by fixed-point iteration: digamma(alpha_k) is set
// to digamma(sum alpha) + mean log p_k, inverted with Newton steps.
DirichletFit fit_dirichlet(const std::vector<std::vector<double>>& samples,
                           const DirichletFitOptions& opts = {});

// Per-transform Dirichlet parameters plus the instance threshold fitted on
// training scores.
struct DirichletParams {
  std::vector<DirichletFit> per_transform;  // K fits, K-vector alpha each
  std::size_t transform_count() const { return per_transform.size(); }
};

constexpr double kSoftmaxClip = 1e-6;

// Clips into [clip, 1-clip] and renormalizes to the simplex.
std::vector<double> clip_simplex(std::vector<double> probs, double clip = kSoftmaxClip);

// For each transform i, the softmax vectors of every transformed training
// image (clipped and renormalized): sample sets for fit_dirichlet.
std::vector<std::vector<std::vector<double>>> collect_softmax_stats(
    ClassifierModel<float>& model, const std::vector<BehaviorImage>& train_images,
    const std::vector<TransformSpec>& transforms, double clip = kSoftmaxClip);

DirichletParams fit_dirichlet_params(
    const std::vector<std::vector<std::vector<double>>>& per_transform_samples,
    const DirichletFitOptions& opts = {});

// r(x) = 1 - (1/K) * sum_i (alpha_i - 1) . log y(psi_i(x)). Higher is more
// anomalous. `softmax_per_transform` holds y(psi_i(x)) for each i.
double anomaly_score_from_softmax(const DirichletParams& params,
                                  const std::vector<std::vector<double>>& softmax_per_transform,
                                  double clip = kSoftmaxClip);

double anomaly_score(ClassifierModel<float>& model, const DirichletParams& params,
                     const BehaviorImage& image, const std::vector<TransformSpec>& transforms,
                     double clip = kSoftmaxClip);

struct Thresholds {
  double tau = 95.0;    // percentile in (0, 100)
  double lambda = 0.0;  // instance score threshold
  double kappa = 0.14;  // user proportion threshold in (0, 1)
};

// Nearest-rank percentile: sort ascending, take the value at rank
// ceil(tau/100 * n) (1-based).
double fit_threshold(std::vector<double> train_scores, double tau);

// Instance rule uses >= lambda; user rule uses a strict > kappa on the
// flagged proportion.
bool classify_instance(double score, const Thresholds& t);
bool classify_user(const std::vector<bool>& flags_in_window, double kappa);

}  // namespace itd
