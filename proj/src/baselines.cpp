#include "itd/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "itd/error.hpp"
#include "itd/rng.hpp"

namespace itd {

namespace {
constexpr double kEulerGamma = 0.5772156649015329;
}

double iforest_path_normalizer(int n) {
  if (n <= 1) return 0.0;
  const double harmonic = std::log(static_cast<double>(n - 1)) + kEulerGamma;
  return 2.0 * harmonic - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
}

namespace {

int build_tree(IsolationForest::Tree& tree, std::vector<int>& items,
               const std::vector<std::vector<double>>& data, int begin, int end, int depth,
               int height_limit, Rng& rng) {
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({});
  const int count = end - begin;
  if (count <= 1 || depth >= height_limit) {
    tree.nodes[static_cast<std::size_t>(node_id)].size = count;
    return node_id;
  }

  const std::size_t dim = data.front().size();
  // Features with zero range cannot split; pick among the rest.
  std::vector<int> usable;
  std::vector<std::pair<double, double>> ranges(dim);
  for (std::size_t f = 0; f < dim; ++f) {
    double lo = data[static_cast<std::size_t>(items[static_cast<std::size_t>(begin)])][f];
    double hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      const double v = data[static_cast<std::size_t>(items[static_cast<std::size_t>(i)])][f];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    ranges[f] = {lo, hi};
    if (hi > lo) usable.push_back(static_cast<int>(f));
  }
  if (usable.empty()) {
    tree.nodes[static_cast<std::size_t>(node_id)].size = count;
    return node_id;
  }

  const int feature = usable[rng.uniform_index(usable.size())];
  const auto [lo, hi] = ranges[static_cast<std::size_t>(feature)];
  const double split = rng.uniform(lo, hi);

  auto mid_it = std::partition(items.begin() + begin, items.begin() + end, [&](int idx) {
    return data[static_cast<std::size_t>(idx)][static_cast<std::size_t>(feature)] < split;
  });
  int mid = static_cast<int>(mid_it - items.begin());
  // A degenerate partition (split at the boundary) would recurse forever.
  if (mid == begin || mid == end) mid = begin + count / 2;

  tree.nodes[static_cast<std::size_t>(node_id)].feature = feature;
  tree.nodes[static_cast<std::size_t>(node_id)].split = split;
  const int left = build_tree(tree, items, data, begin, mid, depth + 1, height_limit, rng);
  tree.nodes[static_cast<std::size_t>(node_id)].left = left;
  const int right = build_tree(tree, items, data, mid, end, depth + 1, height_limit, rng);
  tree.nodes[static_cast<std::size_t>(node_id)].right = right;
  return node_id;
}

double path_length(const IsolationForest::Tree& tree, const std::vector<double>& v) {
  int node = 0;
  double depth = 0.0;
  for (;;) {
    const auto& n = tree.nodes[static_cast<std::size_t>(node)];
    if (n.feature < 0) {
      return depth + iforest_path_normalizer(n.size);
    }
    node = v[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right;
    depth += 1.0;
  }
}

}  // namespace

IsolationForest fit_iforest(const std::vector<std::vector<double>>& train_vectors,
                            const IsolationForestConfig& cfg) {
  if (train_vectors.empty()) fail(ErrorKind::EmptyTrainingSet, "no training vectors");
  IsolationForest forest;
  forest.dim = train_vectors.front().size();
  forest.sample_size =
      std::min<int>(cfg.subsample, static_cast<int>(train_vectors.size()));
  const int height_limit = static_cast<int>(
      std::ceil(std::log2(std::max(2, forest.sample_size))));

  Rng rng(cfg.seed);
  std::vector<int> pool(train_vectors.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);

  forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  for (auto& tree : forest.trees) {
    // Subsample without replacement: partial Fisher-Yates.
    for (int i = 0; i < forest.sample_size; ++i) {
      const auto j = i + static_cast<int>(rng.uniform_index(pool.size() - static_cast<std::size_t>(i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    std::vector<int> items(pool.begin(), pool.begin() + forest.sample_size);
    build_tree(tree, items, train_vectors, 0, forest.sample_size, 0, height_limit, rng);
  }
  return forest;
}

double score_iforest(const IsolationForest& forest, const std::vector<double>& v) {
  if (v.size() != forest.dim) fail(ErrorKind::LengthMismatch, "vector dimension mismatch");
  double mean_path = 0.0;
  for (const auto& tree : forest.trees) mean_path += path_length(tree, v);
  mean_path /= static_cast<double>(forest.trees.size());
  return std::pow(2.0, -mean_path / iforest_path_normalizer(forest.sample_size));
}

namespace {

std::vector<int> encoder_widths(std::size_t input_dim, const AutoencoderConfig& cfg) {
  if (!cfg.widths_override.empty()) return cfg.widths_override;
  std::vector<int> widths;
  int w = static_cast<int>(input_dim);
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    w = std::max(1, w / 2);
    widths.push_back(w);
  }
  return widths;
}

template <typename T>
nn::Net<T> build_ae_net(std::size_t input_dim, const AutoencoderConfig& cfg) {
  Rng rng(cfg.seed);
  nn::Net<T> net;
  auto add = [&](std::unique_ptr<nn::Layer<T>> layer, const std::string& name) {
    layer->set_name(name);
    net.layers.push_back(std::move(layer));
  };
  const std::vector<int> widths = encoder_widths(input_dim, cfg);
  int prev = static_cast<int>(input_dim);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    add(std::make_unique<nn::Dense<T>>(prev, widths[i], rng), "enc" + std::to_string(i));
    add(std::make_unique<nn::LeakyReLU<T>>(), "enc_relu" + std::to_string(i));
    prev = widths[i];
  }
  for (std::size_t i = widths.size(); i-- > 0;) {
    const int out = i == 0 ? static_cast<int>(input_dim) : widths[i - 1];
    add(std::make_unique<nn::Dense<T>>(prev, out, rng), "dec" + std::to_string(i));
    if (i != 0) add(std::make_unique<nn::LeakyReLU<T>>(), "dec_relu" + std::to_string(i));
    prev = out;
  }
  // Small positive bias keeps narrow ReLU layers from starting dead.
  for (auto& p : net.params()) {
    if (p.name != "dec0.bias" && p.name.find(".bias") != std::string::npos) {
      std::fill(p.value, p.value + p.size, T(0.05));
    }
  }
  return net;
}

template <typename T>
nn::Tensor<T> vectors_to_tensor(const std::vector<std::vector<double>>& rows,
                                const std::vector<std::size_t>& which) {
  const int dim = static_cast<int>(rows.front().size());
  nn::Tensor<T> out(static_cast<int>(which.size()), dim, 1, 1);
  for (std::size_t i = 0; i < which.size(); ++i) {
    T* dst = out.sample(static_cast<int>(i));
    const auto& src = rows[which[i]];
    for (int j = 0; j < dim; ++j) dst[static_cast<std::size_t>(j)] = static_cast<T>(src[static_cast<std::size_t>(j)]);
  }
  return out;
}

}  // namespace

Autoencoder fit_autoencoder(const std::vector<std::vector<double>>& train_vectors,
                            const AutoencoderConfig& cfg) {
  if (train_vectors.empty()) fail(ErrorKind::EmptyTrainingSet, "no training vectors");
  Autoencoder ae;
  ae.input_dim = train_vectors.front().size();
  ae.config = cfg;
  ae.net = build_ae_net<float>(ae.input_dim, cfg);

  nn::Adam<float> opt(cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.l2_penalty);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_vectors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto params = ae.net.params();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> which(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      nn::Tensor<float> batch = vectors_to_tensor<float>(train_vectors, which);
      ae.net.zero_grad();
      nn::Tensor<float> recon = ae.net.forward(batch, true);
      auto loss = nn::mse_loss(recon, batch);
      ae.net.backward(loss.grad);
      params = ae.net.params();
      opt.step(params);
    }
  }
  return ae;
}

double score_autoencoder(Autoencoder& ae, const std::vector<double>& v) {
  if (v.size() != ae.input_dim) fail(ErrorKind::LengthMismatch, "vector dimension mismatch");
  nn::Tensor<float> input(1, static_cast<int>(ae.input_dim), 1, 1);
  for (std::size_t i = 0; i < v.size(); ++i) input.v[i] = static_cast<float>(v[i]);
  nn::Tensor<float> recon = ae.net.forward(input, false);
  double err = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = static_cast<double>(recon.v[i]) - v[i];
    err += d * d;
  }
  return err / static_cast<double>(v.size());
}

nn::GradCheckResult autoencoder_gradient_check(std::size_t input_dim,
                                               const AutoencoderConfig& cfg,
                                               std::size_t max_params, double step,
                                               std::uint64_t seed) {
  nn::Net<double> net = build_ae_net<double>(input_dim, cfg);
  Rng rng(seed);
  nn::Tensor<double> input(4, static_cast<int>(input_dim), 1, 1);
  for (double& v : input.v) v = rng.uniform();
  auto loss_fn = [&input](const nn::Tensor<double>& out) { return nn::mse_loss(out, input); };
  return nn::gradient_check<double>(net, input, loss_fn, max_params, step, seed);
}

AutoencoderConfig tune_autoencoder(const std::vector<std::vector<double>>& train_vectors,
                                   int trials, std::uint64_t seed) {
  if (train_vectors.size() < 5) fail(ErrorKind::InsufficientData, "too few vectors to tune on");
  Rng rng(seed);

  // Hold out the tail as the validation split.
  const std::size_t n_val = std::max<std::size_t>(1, train_vectors.size() / 5);
  const std::size_t n_fit = train_vectors.size() - n_val;
  std::vector<std::vector<double>> fit_part(train_vectors.begin(),
                                            train_vectors.begin() + static_cast<std::ptrdiff_t>(n_fit));

  AutoencoderConfig best;
  double best_err = 0.0;
  bool first = true;
  for (int t = 0; t < trials; ++t) {
    AutoencoderConfig cfg;
    cfg.hidden_layers = rng.uniform_int(1, 3);
    cfg.seed = rng.next_u64();
    cfg.epochs = 60;  // tuning pass, cheaper than the final fit
    Autoencoder ae = fit_autoencoder(fit_part, cfg);
    double err = 0.0;
    for (std::size_t i = n_fit; i < train_vectors.size(); ++i) {
      err += score_autoencoder(ae, train_vectors[i]);
    }
    err /= static_cast<double>(n_val);
    if (first || err < best_err) {
      best = cfg;
      best_err = err;
      first = false;
    }
  }
  return best;
}

}  // namespace itd
