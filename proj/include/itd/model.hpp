#pragma once

#include <string>
#include <vector>

#include "itd/imaging.hpp"
#include "itd/nn.hpp"

namespace itd {

// WideResnet10x4: initial 16-map conv plus three pre-activation blocks at
// widths 64/128/256 and strides 1/2/2 (7 convolutions, 3 skip connections),
// then global average pooling and an affine head. Tiny: two convs + pool +
// head, for fast runs.
enum class ArchKind { Tiny, WideResnet10x4 };

const char* arch_name(ArchKind a);
ArchKind arch_from_name(const std::string& name);

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.9;

template <typename T>
struct ClassifierModel {
  nn::Net<T> net;
  int input_side = 0;
  int num_classes = 0;
  ArchKind arch = ArchKind::Tiny;
  std::uint64_t seed = 0;

  int conv_count() const {
    int convs = 0, skips = 0;
    net.stats(convs, skips);
    return convs;
  }
  int skip_count() const {
    int convs = 0, skips = 0;
    net.stats(convs, skips);
    return skips;
  }
};

template <typename T>
ClassifierModel<T> build_classifier(int input_side, int num_classes, ArchKind arch,
                                    std::uint64_t seed) {
  if (input_side != 16 && input_side != 28 && input_side != 40) {
    fail(ErrorKind::UnsupportedSide, "input side must be 16, 28 or 40, got " +
                                         std::to_string(input_side));
  }
  if (num_classes < 2) {
    fail(ErrorKind::ConfigError, "need at least 2 classes, got " + std::to_string(num_classes));
  }

  ClassifierModel<T> model;
  model.input_side = input_side;
  model.num_classes = num_classes;
  model.arch = arch;
  model.seed = seed;
  Rng rng(seed);

  auto add = [&](std::unique_ptr<nn::Layer<T>> layer, const std::string& name) {
    layer->set_name(name);
    model.net.layers.push_back(std::move(layer));
  };

  if (arch == ArchKind::Tiny) {
    // Batch norm keeps the logit scale invariant to overall image brightness;
    // without it bright outliers saturate the softmax. The pool keeps a 4x4
    // grid so the head can still tell shifts and rotations apart.
    add(std::make_unique<nn::Conv2d<T>>(1, 8, 3, 1, 1, false, rng), "conv0");
    add(std::make_unique<nn::BatchNorm2d<T>>(8, kBatchNormEps, kBatchNormMomentum), "bn0");
    add(std::make_unique<nn::ReLU<T>>(), "relu0");
    add(std::make_unique<nn::Conv2d<T>>(8, 16, 3, 2, 1, false, rng), "conv1");
    add(std::make_unique<nn::BatchNorm2d<T>>(16, kBatchNormEps, kBatchNormMomentum), "bn1");
    add(std::make_unique<nn::ReLU<T>>(), "relu1");
    const int grid = input_side / 4;  // 2x2 cells after the stride-2 conv
    add(std::make_unique<nn::GridAvgPool<T>>(grid), "pool");
    add(std::make_unique<nn::Dense<T>>(16 * grid * grid, num_classes, rng), "head");
    return model;
  }

  const int widen = 4;
  add(std::make_unique<nn::Conv2d<T>>(1, 16, 3, 1, 1, false, rng), "conv0");
  add(std::make_unique<nn::PreactResidualBlock<T>>(16, 16 * widen, 1, kBatchNormEps,
                                                   kBatchNormMomentum, rng),
      "block1");
  add(std::make_unique<nn::PreactResidualBlock<T>>(16 * widen, 32 * widen, 2, kBatchNormEps,
                                                   kBatchNormMomentum, rng),
      "block2");
  add(std::make_unique<nn::PreactResidualBlock<T>>(32 * widen, 64 * widen, 2, kBatchNormEps,
                                                   kBatchNormMomentum, rng),
      "block3");
  add(std::make_unique<nn::BatchNorm2d<T>>(64 * widen, kBatchNormEps, kBatchNormMomentum),
      "bn_final");
  add(std::make_unique<nn::ReLU<T>>(), "relu_final");
  add(std::make_unique<nn::GlobalAvgPool<T>>(), "pool");
  add(std::make_unique<nn::Dense<T>>(64 * widen, num_classes, rng), "head");
  return model;
}

struct TrainConfig {
  int batch_size = 32;
  int epochs = 30;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

template <typename T>
nn::Tensor<T> image_batch(const std::vector<const BehaviorImage*>& images) {
  const int side = images.front()->side;
  nn::Tensor<T> batch(static_cast<int>(images.size()), 1, side, side);
  for (std::size_t i = 0; i < images.size(); ++i) {
    T* dst = batch.sample(static_cast<int>(i));
    const auto& px = images[i]->pixels;
    for (std::size_t p = 0; p < px.size(); ++p) dst[p] = static_cast<T>(px[p]);
  }
  return batch;
}

// Trains on the self-labelled set; history holds one entry per epoch. The
// shuffle order is driven entirely by cfg.seed, so runs are reproducible.
template <typename T>
std::vector<EpochStats> fit_classifier(ClassifierModel<T>& model, const SelfLabelledSet& dataset,
                                       const TrainConfig& cfg) {
  if (cfg.epochs < 1) fail(ErrorKind::ConfigError, "epochs must be >= 1");
  if (cfg.batch_size < 1) fail(ErrorKind::ConfigError, "batch_size must be >= 1");
  if (dataset.items.empty()) fail(ErrorKind::EmptyTrainSet, "self-labelled set is empty");
  for (const auto& item : dataset.items) {
    if (item.image.side != model.input_side) {
      fail(ErrorKind::ShapeMismatch, "image side " + std::to_string(item.image.side) +
                                         " != model side " + std::to_string(model.input_side));
    }
    if (item.label < 0 || item.label >= model.num_classes) {
      fail(ErrorKind::ConfigError, "label " + std::to_string(item.label) + " outside [0, K)");
    }
  }

  nn::Adam<T> opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(dataset.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<EpochStats> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  auto params = model.net.params();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<const BehaviorImage*> images;
      std::vector<int> labels;
      images.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        images.push_back(&dataset.items[order[i]].image);
        labels.push_back(dataset.items[order[i]].label);
      }
      nn::Tensor<T> batch = image_batch<T>(images);
      model.net.zero_grad();
      nn::Tensor<T> logits = model.net.forward(batch, true);
      auto loss = nn::softmax_cross_entropy(logits, labels);
      model.net.backward(loss.grad);
      params = model.net.params();
      opt.step(params);

      loss_sum += loss.loss * static_cast<double>(end - begin);
      for (int i = 0; i < logits.n; ++i) {
        const T* row = logits.sample(i);
        int best = 0;
        for (int j = 1; j < model.num_classes; ++j) {
          if (row[j] > row[best]) best = j;
        }
        if (best == labels[static_cast<std::size_t>(i)]) ++correct;
      }
    }
    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    history.push_back(stats);
  }
  return history;
}

// Mean loss/accuracy without updating weights (batch-norm uses running stats).
template <typename T>
EpochStats evaluate_classifier(ClassifierModel<T>& model, const SelfLabelledSet& dataset) {
  double loss_sum = 0.0;
  std::size_t correct = 0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < dataset.items.size(); begin += kChunk) {
    const std::size_t end = std::min(dataset.items.size(), begin + kChunk);
    std::vector<const BehaviorImage*> images;
    std::vector<int> labels;
    for (std::size_t i = begin; i < end; ++i) {
      images.push_back(&dataset.items[i].image);
      labels.push_back(dataset.items[i].label);
    }
    nn::Tensor<T> batch = image_batch<T>(images);
    nn::Tensor<T> logits = model.net.forward(batch, false);
    auto loss = nn::softmax_cross_entropy(logits, labels);
    loss_sum += loss.loss * static_cast<double>(end - begin);
    for (int i = 0; i < logits.n; ++i) {
      const T* row = logits.sample(i);
      int best = 0;
      for (int j = 1; j < model.num_classes; ++j) {
        if (row[j] > row[best]) best = j;
      }
      if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  EpochStats out;
  out.loss = loss_sum / static_cast<double>(dataset.items.size());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.items.size());
  return out;
}

template <typename T>
std::vector<double> predict_softmax(ClassifierModel<T>& model, const BehaviorImage& image) {
  if (image.side != model.input_side) {
    fail(ErrorKind::ShapeMismatch, "image side " + std::to_string(image.side) +
                                       " != model side " + std::to_string(model.input_side));
  }
  std::vector<const BehaviorImage*> one{&image};
  nn::Tensor<T> batch = image_batch<T>(one);
  nn::Tensor<T> logits = model.net.forward(batch, false);
  return nn::softmax_row(logits.sample(0), model.num_classes);
}

// Checkpoint: JSON manifest + little-endian float32 blob in manifest order
// (includes batch-norm running statistics). Loading reproduces predictions
// bitwise.
void save_checkpoint(ClassifierModel<float>& model, const std::string& stem);
ClassifierModel<float> load_checkpoint(const std::string& stem);

}  // namespace itd
