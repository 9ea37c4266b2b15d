#include "itd/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "itd/error.hpp"

namespace itd {

double digamma(double x) {
  // Recurrence into the asymptotic region, then the standard expansion.
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return result;
}

double trigamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += inv * (1.0 + 0.5 * inv +
                   inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0))));
  return result;
}

double inverse_digamma(double y) {
  // Minka's initialization, then Newton.
  double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y - digamma(1.0));
  for (int i = 0; i < 8; ++i) {
    x -= (digamma(x) - y) / trigamma(x);
    if (x <= 0.0) x = 1e-12;
  }
  return x;
}

double dirichlet_mean_log_likelihood(const std::vector<std::vector<double>>& samples,
                                     const std::vector<double>& alpha) {
  const std::size_t k = alpha.size();
  std::vector<double> mean_log(k, 0.0);
  for (const auto& s : samples) {
    for (std::size_t j = 0; j < k; ++j) mean_log[j] += std::log(s[j]);
  }
  for (double& v : mean_log) v /= static_cast<double>(samples.size());

  double alpha_sum = 0.0;
  double ll = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    alpha_sum += alpha[j];
    ll += -std::lgamma(alpha[j]) + (alpha[j] - 1.0) * mean_log[j];
  }
  ll += std::lgamma(alpha_sum);
  return ll;
}

DirichletFit fit_dirichlet(const std::vector<std::vector<double>>& samples,
                           const DirichletFitOptions& opts) {
  if (samples.size() < 2) {
    fail(ErrorKind::InsufficientData,
         "need >= 2 samples to fit, got " + std::to_string(samples.size()));
  }
  const std::size_t k = samples.front().size();
  if (k < 2) fail(ErrorKind::MismatchedK, "need simplex dimension >= 2");
  for (const auto& s : samples) {
    if (s.size() != k) fail(ErrorKind::MismatchedK, "inconsistent sample dimensions");
    for (double p : s) {
      if (!(p > 0.0 && p < 1.0)) {
        fail(ErrorKind::DataError, "sample components must lie in (0,1); clip first");
      }
    }
  }

  // Sufficient statistics.
  std::vector<double> mean(k, 0.0), mean_sq(k, 0.0), mean_log(k, 0.0);
  for (const auto& s : samples) {
    for (std::size_t j = 0; j < k; ++j) {
      mean[j] += s[j];
      mean_sq[j] += s[j] * s[j];
      mean_log[j] += std::log(s[j]);
    }
  }
  const double n = static_cast<double>(samples.size());
  for (std::size_t j = 0; j < k; ++j) {
    mean[j] /= n;
    mean_sq[j] /= n;
    mean_log[j] /= n;
  }

  DirichletFit fit;

  // All-components-constant samples have no finite MLE; cap and flag.
  double max_var = 0.0;
  double max_mean = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    max_var = std::max(max_var, mean_sq[j] - mean[j] * mean[j]);
    max_mean = std::max(max_mean, mean[j]);
  }
  if (max_var < 1e-14) {
    fit.alpha.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      fit.alpha[j] = std::min(opts.alpha_cap, opts.alpha_cap * mean[j] / max_mean);
    }
    fit.degenerate = true;
    fit.log_likelihood = dirichlet_mean_log_likelihood(samples, fit.alpha);
    return fit;
  }

  // Method-of-moments start (first component with usable variance).
  double concentration = static_cast<double>(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double var = mean_sq[j] - mean[j] * mean[j];
    if (var > 1e-12 && mean[j] > 0.0 && mean[j] < 1.0) {
      concentration = std::max(1e-3, mean[j] * (1.0 - mean[j]) / var - 1.0);
      break;
    }
  }
  std::vector<double> alpha(k);
  for (std::size_t j = 0; j < k; ++j) alpha[j] = std::max(1e-6, concentration * mean[j]);

  bool capped = false;
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    const double alpha_sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    const double psi_sum = digamma(alpha_sum);
    double max_step = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double next = inverse_digamma(psi_sum + mean_log[j]);
      if (next > opts.alpha_cap) {
        next = opts.alpha_cap;
        capped = true;
      }
      max_step = std::max(max_step, std::abs(next - alpha[j]) / std::max(alpha[j], 1e-12));
      alpha[j] = next;
    }
    if (max_step < opts.tolerance) {
      ++iter;
      break;
    }
  }

  fit.alpha = std::move(alpha);
  fit.iterations = iter;
  fit.degenerate = capped;
  fit.log_likelihood = dirichlet_mean_log_likelihood(samples, fit.alpha);
  return fit;
}

std::vector<double> clip_simplex(std::vector<double> probs, double clip) {
  double sum = 0.0;
  for (double& p : probs) {
    p = std::clamp(p, clip, 1.0 - clip);
    sum += p;
  }
  for (double& p : probs) p /= sum;
  return probs;
}

std::vector<std::vector<std::vector<double>>> collect_softmax_stats(
    ClassifierModel<float>& model, const std::vector<BehaviorImage>& train_images,
    const std::vector<TransformSpec>& transforms, double clip) {
  if (train_images.empty()) fail(ErrorKind::EmptyTrainSet, "no training images");
  std::vector<std::vector<std::vector<double>>> stats(transforms.size());
  for (std::size_t t = 0; t < transforms.size(); ++t) {
    stats[t].reserve(train_images.size());
    for (const BehaviorImage& img : train_images) {
      const BehaviorImage transformed = apply_transform(img, transforms[t]);
      stats[t].push_back(clip_simplex(predict_softmax(model, transformed), clip));
    }
  }
  return stats;
}

DirichletParams fit_dirichlet_params(
    const std::vector<std::vector<std::vector<double>>>& per_transform_samples,
    const DirichletFitOptions& opts) {
  DirichletParams params;
  params.per_transform.reserve(per_transform_samples.size());
  for (const auto& samples : per_transform_samples) {
    params.per_transform.push_back(fit_dirichlet(samples, opts));
  }
  return params;
}

double anomaly_score_from_softmax(const DirichletParams& params,
                                  const std::vector<std::vector<double>>& softmax_per_transform,
                                  double clip) {
  const std::size_t k = params.transform_count();
  if (k == 0 || softmax_per_transform.size() != k) {
    fail(ErrorKind::MismatchedK, "transform count mismatch between params and softmax vectors");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& alpha = params.per_transform[i].alpha;
    const auto y = clip_simplex(softmax_per_transform[i], clip);
    if (alpha.size() != y.size()) {
      fail(ErrorKind::MismatchedK, "alpha dimension mismatch at transform " + std::to_string(i));
    }
    for (std::size_t j = 0; j < y.size(); ++j) {
      acc += (alpha[j] - 1.0) * std::log(y[j]);
    }
  }
  return 1.0 - acc / static_cast<double>(k);
}

double anomaly_score(ClassifierModel<float>& model, const DirichletParams& params,
                     const BehaviorImage& image, const std::vector<TransformSpec>& transforms,
                     double clip) {
  if (transforms.size() != params.transform_count()) {
    fail(ErrorKind::MismatchedK, "transform set does not match fitted params");
  }
  std::vector<std::vector<double>> softmaxes;
  softmaxes.reserve(transforms.size());
  for (const TransformSpec& spec : transforms) {
    softmaxes.push_back(predict_softmax(model, apply_transform(image, spec)));
  }
  return anomaly_score_from_softmax(params, softmaxes, clip);
}

double fit_threshold(std::vector<double> train_scores, double tau) {
  if (train_scores.empty()) fail(ErrorKind::EmptyScores, "no training scores");
  if (!(tau > 0.0 && tau < 100.0)) fail(ErrorKind::ConfigError, "tau must be in (0, 100)");
  std::sort(train_scores.begin(), train_scores.end());
  const auto n = static_cast<double>(train_scores.size());
  auto rank = static_cast<std::size_t>(std::ceil(tau / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, train_scores.size());
  return train_scores[rank - 1];
}

bool classify_instance(double score, const Thresholds& t) { return score >= t.lambda; }

bool classify_user(const std::vector<bool>& flags_in_window, double kappa) {
  if (flags_in_window.empty()) fail(ErrorKind::EmptyWindow, "no instances in decision window");
  std::size_t flagged = 0;
  for (bool f : flags_in_window) flagged += f ? 1 : 0;
  const double proportion =
      static_cast<double>(flagged) / static_cast<double>(flags_in_window.size());
  return proportion > kappa;
}

}  // namespace itd
