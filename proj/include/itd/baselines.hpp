#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "itd/nn.hpp"

namespace itd {

// ---------------------------------------------------------------------------
// Isolation forest over raw feature vectors. Standard construction: random
// axis/value splits on a subsample per tree, height limit ceil(log2 psi),
// score 2^(-E[h(v)] / c(psi)) with c(n) = 2 H(n-1) - 2 (n-1)/n, H via ln + gamma.
// ---------------------------------------------------------------------------

struct IsolationForestConfig {
  int n_trees = 100;       // paper search range 30..100
  int subsample = 256;     // capped at the training size
  std::uint64_t seed = 1;
};

struct IsolationForest {
  struct Node {
    int feature = -1;
    double split = 0.0;
    int left = -1;
    int right = -1;
    int size = 0;  // external nodes only
  };
  struct Tree {
    std::vector<Node> nodes;
  };
  std::vector<Tree> trees;
  int sample_size = 0;
  std::size_t dim = 0;
};

double iforest_path_normalizer(int n);  // c(n)

IsolationForest fit_iforest(const std::vector<std::vector<double>>& train_vectors,
                            const IsolationForestConfig& cfg = {});
double score_iforest(const IsolationForest& forest, const std::vector<double>& v);

// ---------------------------------------------------------------------------
// Fully-connected symmetric autoencoder; hidden widths halve per layer. The
// score is the mean squared reconstruction error. Shares the nn training
// machinery (Adam, MSE, gradient checks).
// ---------------------------------------------------------------------------

struct AutoencoderConfig {
  int hidden_layers = 1;            // paper search range 1..3
  std::vector<int> widths_override; // explicit encoder widths, for tests
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double l2_penalty = 1e-6;
  std::uint64_t seed = 1;
};

struct Autoencoder {
  nn::Net<float> net;
  std::size_t input_dim = 0;
  AutoencoderConfig config;
};

Autoencoder fit_autoencoder(const std::vector<std::vector<double>>& train_vectors,
                            const AutoencoderConfig& cfg = {});
double score_autoencoder(Autoencoder& ae, const std::vector<double>& v);

// Double-precision gradient check of the autoencoder MSE loss.
nn::GradCheckResult autoencoder_gradient_check(std::size_t input_dim,
                                               const AutoencoderConfig& cfg,
                                               std::size_t max_params, double step,
                                               std::uint64_t seed);

// Seeded random search over hidden_layers in 1..3, picking the config with the
// lowest held-out reconstruction error.
AutoencoderConfig tune_autoencoder(const std::vector<std::vector<double>>& train_vectors,
                                   int trials, std::uint64_t seed);

}  // namespace itd
