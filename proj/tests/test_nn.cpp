#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "itd/error.hpp"
#include "itd/model.hpp"
#include "itd/rng.hpp"

using namespace itd;

namespace {

BehaviorImage noise_image(Rng& rng, int side) {
  BehaviorImage img;
  img.side = side;
  img.pixels.resize(static_cast<std::size_t>(side) * side);
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

// Two classes separable by where the mass sits: top half vs bottom half.
SelfLabelledSet half_mass_dataset(Rng& rng, int side, int per_class) {
  SelfLabelledSet set;
  set.source_count = static_cast<std::size_t>(per_class) * 2;
  set.transform_count = 2;
  for (int i = 0; i < per_class * 2; ++i) {
    const int label = i % 2;
    BehaviorImage img;
    img.side = side;
    img.pixels.assign(static_cast<std::size_t>(side) * side, 0.0);
    for (int y = 0; y < side / 2; ++y) {
      for (int x = 0; x < side; ++x) {
        const int row = label == 0 ? y : side - 1 - y;
        img.at(row, x) = 0.5 + 0.5 * rng.uniform();
      }
    }
    set.items.push_back({std::move(img), label});
  }
  return set;
}

template <typename T>
nn::GradCheckResult classifier_gradient_check(ClassifierModel<T>& model, int batch,
                                              std::size_t max_params, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<BehaviorImage> images;
  std::vector<const BehaviorImage*> ptrs;
  std::vector<int> labels;
  for (int i = 0; i < batch; ++i) {
    images.push_back(noise_image(rng, model.input_side));
    labels.push_back(static_cast<int>(rng.uniform_index(
        static_cast<std::uint64_t>(model.num_classes))));
  }
  for (const auto& img : images) ptrs.push_back(&img);
  nn::Tensor<T> input = image_batch<T>(ptrs);
  auto loss_fn = [&labels](const nn::Tensor<T>& out) {
    return nn::softmax_cross_entropy(out, labels);
  };
  return nn::gradient_check<T>(model.net, input, loss_fn, max_params, 1e-5, seed + 1);
}

}  // namespace

TEST_SUITE("nn.build") {
  TEST_CASE("wide residual arch reports 7 convolutions and 3 skip connections") {
    auto model = build_classifier<float>(28, 18, ArchKind::WideResnet10x4, 1);
    CHECK(model.conv_count() == 7);
    CHECK(model.skip_count() == 3);
    const auto p = predict_softmax(model, [] {
      BehaviorImage img;
      img.side = 28;
      img.pixels.assign(28 * 28, 0.1);
      return img;
    }());
    CHECK(p.size() == 18);
  }

  TEST_CASE("tiny arch forward yields a length-K simplex") {
    auto model = build_classifier<float>(16, 2, ArchKind::Tiny, 1);
    Rng rng(2);
    const auto p = predict_softmax(model, noise_image(rng, 16));
    REQUIRE(p.size() == 2);
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("same seed gives identical initial weights, different seed differs") {
    auto a = build_classifier<float>(16, 4, ArchKind::Tiny, 77);
    auto b = build_classifier<float>(16, 4, ArchKind::Tiny, 77);
    auto c = build_classifier<float>(16, 4, ArchKind::Tiny, 78);
    const auto pa = a.net.params();
    const auto pb = b.net.params();
    const auto pc = c.net.params();
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      for (std::size_t e = 0; e < pa[i].size; ++e) {
        all_equal &= pa[i].value[e] == pb[i].value[e];
        any_diff |= pa[i].value[e] != pc[i].value[e];
      }
    }
    CHECK(all_equal);
    CHECK(any_diff);
  }

  TEST_CASE("unsupported side is rejected") {
    try {
      build_classifier<float>(17, 4, ArchKind::Tiny, 1);
      FAIL("expected UnsupportedSide");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::UnsupportedSide);
    }
  }
}

TEST_SUITE("nn.softmax") {
  TEST_CASE("softmax normalizes, is uniform on equal logits, shift invariant") {
    const float logits[4] = {1.0f, 2.0f, 3.0f, 4.0f};
    auto p = nn::softmax_row(logits, 4);
    double sum = 0.0;
    for (double x : p) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    const float equal[3] = {0.5f, 0.5f, 0.5f};
    for (double x : nn::softmax_row(equal, 3)) CHECK(x == doctest::Approx(1.0 / 3));

    const float shifted[4] = {11.0f, 12.0f, 13.0f, 14.0f};
    auto q = nn::softmax_row(shifted, 4);
    for (int i = 0; i < 4; ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-5));
  }
}

TEST_SUITE("nn.train") {
  TEST_CASE("separable toy set reaches >= 0.99 training accuracy") {
    Rng rng(5);
    const auto dataset = half_mass_dataset(rng, 16, 40);
    auto model = build_classifier<float>(16, 2, ArchKind::Tiny, 5);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = 5;
    const auto history = fit_classifier(model, dataset, cfg);
    REQUIRE(history.size() == 30);
    CHECK(history.back().accuracy >= 0.99);
  }

  TEST_CASE("epochs must be positive") {
    Rng rng(6);
    const auto dataset = half_mass_dataset(rng, 16, 4);
    auto model = build_classifier<float>(16, 2, ArchKind::Tiny, 6);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(fit_classifier(model, dataset, cfg), Error);
  }

  TEST_CASE("initial loss is ln K within 10% under random init") {
    Rng rng(7);
    for (const int k : {2, 5, 18}) {
      SelfLabelledSet set;
      set.transform_count = static_cast<std::size_t>(k);
      for (int i = 0; i < 3 * k; ++i) {
        set.items.push_back({noise_image(rng, 16), i % k});
      }
      set.source_count = set.items.size();
      auto model = build_classifier<float>(16, k, ArchKind::Tiny, 7 + k);
      const auto stats = evaluate_classifier(model, set);
      CHECK(stats.loss == doctest::Approx(std::log(k)).epsilon(0.10));
    }
  }

  TEST_CASE("image side mismatch fails with ShapeMismatch") {
    Rng rng(8);
    auto model = build_classifier<float>(28, 2, ArchKind::Tiny, 8);
    SelfLabelledSet set;
    set.items.push_back({noise_image(rng, 16), 0});
    set.items.push_back({noise_image(rng, 16), 1});
    set.transform_count = 2;
    set.source_count = 1;
    TrainConfig cfg;
    try {
      fit_classifier(model, set, cfg);
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
    CHECK_THROWS_AS(predict_softmax(model, noise_image(rng, 16)), Error);
  }

  TEST_CASE("fixed seed reproduces the training history bitwise") {
    Rng rng(9);
    const auto dataset = half_mass_dataset(rng, 16, 10);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 99;
    auto m1 = build_classifier<float>(16, 2, ArchKind::Tiny, 9);
    auto m2 = build_classifier<float>(16, 2, ArchKind::Tiny, 9);
    const auto h1 = fit_classifier(m1, dataset, cfg);
    const auto h2 = fit_classifier(m2, dataset, cfg);
    REQUIRE(h1.size() == h2.size());
    for (std::size_t i = 0; i < h1.size(); ++i) {
      CHECK(h1[i].loss == h2[i].loss);
      CHECK(h1[i].accuracy == h2[i].accuracy);
    }
  }
}

TEST_SUITE("nn.gradcheck") {
  TEST_CASE("tiny arch analytic gradients match central differences") {
    auto model = build_classifier<double>(16, 4, ArchKind::Tiny, 21);
    const auto result = classifier_gradient_check(model, 4, 200, 21);
    CHECK(result.checked == 200);
    CHECK(result.max_rel_error < 1e-5);
  }

  TEST_CASE("wide residual arch gradients (batch norm path) check out") {
    // Seed picked away from ReLU kinks; finite differences step across them.
    auto model = build_classifier<double>(16, 3, ArchKind::WideResnet10x4, 23);
    const auto result = classifier_gradient_check(model, 2, 24, 23);
    CHECK(result.checked == 24);
    CHECK(result.max_rel_error < 1e-5);
  }

  TEST_CASE("zero image produces finite gradients") {
    auto model = build_classifier<double>(16, 3, ArchKind::Tiny, 23);
    BehaviorImage zero;
    zero.side = 16;
    zero.pixels.assign(256, 0.0);
    std::vector<const BehaviorImage*> ptrs{&zero};
    nn::Tensor<double> input = image_batch<double>(ptrs);
    std::vector<int> labels{1};
    model.net.zero_grad();
    auto loss = nn::softmax_cross_entropy(model.net.forward(input, true), labels);
    model.net.backward(loss.grad);
    for (const auto& p : model.net.params()) {
      if (!p.grad) continue;
      for (std::size_t e = 0; e < p.size; ++e) CHECK(std::isfinite(p.grad[e]));
    }
  }

  TEST_CASE("repeated checks with the same seed are identical") {
    auto m1 = build_classifier<double>(16, 4, ArchKind::Tiny, 24);
    auto m2 = build_classifier<double>(16, 4, ArchKind::Tiny, 24);
    const auto r1 = classifier_gradient_check(m1, 3, 50, 24);
    const auto r2 = classifier_gradient_check(m2, 3, 50, 24);
    CHECK(r1.checked == r2.checked);
    CHECK(r1.max_rel_error == r2.max_rel_error);
  }
}

TEST_SUITE("nn.checkpoint") {
  TEST_CASE("save/load reproduces predictions bitwise") {
    Rng rng(31);
    const auto dataset = half_mass_dataset(rng, 16, 8);
    auto model = build_classifier<float>(16, 2, ArchKind::Tiny, 31);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 31;
    fit_classifier(model, dataset, cfg);

    const auto dir = std::filesystem::temp_directory_path() / "itd_ckpt_test";
    std::filesystem::create_directories(dir);
    const std::string stem = (dir / "model").string();
    save_checkpoint(model, stem);
    auto loaded = load_checkpoint(stem);

    for (int i = 0; i < 5; ++i) {
      const auto img = noise_image(rng, 16);
      const auto a = predict_softmax(model, img);
      const auto b = predict_softmax(loaded, img);
      REQUIRE(a.size() == b.size());
      for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
    }
    std::filesystem::remove_all(dir);
  }
}
