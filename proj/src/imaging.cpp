#include "itd/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "itd/error.hpp"

namespace itd {

namespace {

struct Kernel3 {
  double w[9];
};

// 3x3 Gaussian, sigma 1, normalized; convolved with edge replication.
Kernel3 make_gaussian() {
  Kernel3 k{};
  double sum = 0.0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const double g = std::exp(-(dx * dx + dy * dy) / 2.0);
      k.w[(dy + 1) * 3 + (dx + 1)] = g;
      sum += g;
    }
  }
  for (double& v : k.w) v /= sum;
  return k;
}

// Laplacian-of-Gaussian at sigma 0.5 discretized to 3x3, made zero-sum and
// negated so the center is positive; adding its response sharpens and leaves
// constant images untouched.
Kernel3 make_sharpen() {
  Kernel3 k{};
  const double sigma = 0.5;
  const double s2 = sigma * sigma;
  const double scale = -1.0 / (3.14159265358979323846 * s2 * s2);
  double sum = 0.0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const double r2 = dx * dx + dy * dy;
      const double v = scale * (1.0 - r2 / (2.0 * s2)) * std::exp(-r2 / (2.0 * s2));
      k.w[(dy + 1) * 3 + (dx + 1)] = v;
      sum += v;
    }
  }
  for (double& v : k.w) v = -(v - sum / 9.0);
  return k;
}

BehaviorImage convolve3(const BehaviorImage& in, const Kernel3& k) {
  BehaviorImage out = in;
  const int d = in.side;
  for (int y = 0; y < d; ++y) {
    for (int x = 0; x < d; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int sy = std::clamp(y + dy, 0, d - 1);  // edge replication
          const int sx = std::clamp(x + dx, 0, d - 1);
          acc += k.w[(dy + 1) * 3 + (dx + 1)] * in.at(sy, sx);
        }
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

BehaviorImage rotate_ccw(const BehaviorImage& in) {
  BehaviorImage out = in;
  const int d = in.side;
  for (int y = 0; y < d; ++y) {
    for (int x = 0; x < d; ++x) {
      out.at(y, x) = in.at(x, d - 1 - y);
    }
  }
  return out;
}

BehaviorImage flip_horizontal(const BehaviorImage& in) {
  BehaviorImage out = in;
  const int d = in.side;
  for (int y = 0; y < d; ++y) {
    for (int x = 0; x < d; ++x) {
      out.at(y, x) = in.at(y, d - 1 - x);
    }
  }
  return out;
}

BehaviorImage translate(const BehaviorImage& in, int shift_h, int shift_w) {
  BehaviorImage out = in;
  const int d = in.side;
  for (int y = 0; y < d; ++y) {
    for (int x = 0; x < d; ++x) {
      const int sy = y - shift_h;
      const int sx = x - shift_w;
      out.at(y, x) =
          (sy >= 0 && sy < d && sx >= 0 && sx < d) ? in.at(sy, sx) : 0.0;  // zero fill
    }
  }
  return out;
}

}  // namespace

BehaviorImage to_image(const FeatureVector& x) {
  const int d = static_cast<int>(x.values.size());
  BehaviorImage img;
  img.side = d;
  img.pixels.resize(static_cast<std::size_t>(d) * d);
  img.origin.user = x.user;
  img.origin.granularity = x.granularity;
  img.origin.window_start = x.window_start;
  img.origin.label = x.label;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      img.at(i, j) = x.values[static_cast<std::size_t>(i)] * x.values[static_cast<std::size_t>(j)];
    }
  }
  return img;
}

std::string TransformSpec::name() const {
  std::string n;
  if (rotate90) n += "rot90+";
  if (flip_h) n += "flip+";
  if (shift_h != 0 || shift_w != 0) {
    n += "shift(" + std::to_string(shift_h) + "," + std::to_string(shift_w) + ")+";
  }
  if (blur) n += "blur+";
  if (sharpen) n += "sharpen+";
  if (n.empty()) return "identity";
  n.pop_back();
  return n;
}

BehaviorImage apply_transform(const BehaviorImage& image, const TransformSpec& spec) {
  static const Kernel3 kGauss = make_gaussian();
  static const Kernel3 kSharp = make_sharpen();

  BehaviorImage out = image;
  // Right-to-left: sharpen, blur, flip, translate, rotate.
  if (spec.sharpen) {
    BehaviorImage resp = convolve3(out, kSharp);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
      out.pixels[i] = std::clamp(out.pixels[i] + resp.pixels[i], 0.0, 1.0);
    }
  }
  if (spec.blur) out = convolve3(out, kGauss);
  if (spec.flip_h) out = flip_horizontal(out);
  if (spec.shift_h != 0 || spec.shift_w != 0) out = translate(out, spec.shift_h, spec.shift_w);
  if (spec.rotate90) out = rotate_ccw(out);
  return out;
}

std::vector<TransformSpec> candidate_set(bool include_non_geometric,
                                         bool restrict_non_geometric_to_shifts) {
  // Shift offsets enumerate 0 first so the identity lands at index 0.
  static constexpr int kShifts[3] = {0, -1, 1};

  std::vector<TransformSpec> specs;
  auto push = [&](bool flip, bool rot, int sh, int sw, bool blur, bool sharp) {
    TransformSpec t;
    t.flip_h = flip;
    t.rotate90 = rot;
    t.shift_h = sh;
    t.shift_w = sw;
    t.blur = blur;
    t.sharpen = sharp;
    t.index = static_cast<int>(specs.size());
    specs.push_back(t);
  };

  if (include_non_geometric && !restrict_non_geometric_to_shifts) {
    // Full set: 2 x 2 x 9 x 4 = 144.
    for (bool flip : {false, true}) {
      for (bool rot : {false, true}) {
        for (int sh : kShifts) {
          for (int sw : kShifts) {
            for (auto [blur, sharp] : {std::pair{false, false},
                                       {true, false},
                                       {false, true},
                                       {true, true}}) {
              push(flip, rot, sh, sw, blur, sharp);
            }
          }
        }
      }
    }
    return specs;
  }

  // Geometric block: 36.
  for (bool flip : {false, true}) {
    for (bool rot : {false, true}) {
      for (int sh : kShifts) {
        for (int sw : kShifts) {
          push(flip, rot, sh, sw, false, false);
        }
      }
    }
  }

  if (include_non_geometric) {
    // Non-geometric variants over the nine shift-only specs: 27 more -> 63.
    for (int sh : kShifts) {
      for (int sw : kShifts) {
        for (auto [blur, sharp] :
             {std::pair{true, false}, {false, true}, {true, true}}) {
          push(false, false, sh, sw, blur, sharp);
        }
      }
    }
  }
  return specs;
}

std::vector<TransformSpec> candidate_set(TransformPolicy policy) {
  switch (policy) {
    case TransformPolicy::Geometric36: return candidate_set(false, false);
    case TransformPolicy::Simplified63: return candidate_set(true, true);
    case TransformPolicy::Full144: return candidate_set(true, false);
  }
  return candidate_set(false, false);
}

SelfLabelledSet self_label(const std::vector<BehaviorImage>& images,
                           const std::vector<TransformSpec>& transforms) {
  if (transforms.size() < 2) {
    fail(ErrorKind::DegenerateTransformSet,
         "need at least 2 transforms, got " + std::to_string(transforms.size()));
  }
  if (images.empty()) fail(ErrorKind::EmptyTrainSet, "no source images");

  SelfLabelledSet set;
  set.source_count = images.size();
  set.transform_count = transforms.size();
  set.items.reserve(images.size() * transforms.size());
  for (const BehaviorImage& img : images) {
    for (std::size_t t = 0; t < transforms.size(); ++t) {
      SelfLabelledItem item;
      item.image = apply_transform(img, transforms[t]);
      item.label = static_cast<int>(t);
      set.items.push_back(std::move(item));
    }
  }
  return set;
}

void write_pgm(const std::string& path, const BehaviorImage& image) {
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << image.side << " " << image.side << "\n255\n";
  for (double v : image.pixels) {
    const int byte = std::clamp(static_cast<int>(std::lround(v * 255.0)), 0, 255);
    out.put(static_cast<char>(byte));
  }
}

void write_raw_image(const std::string& path, const BehaviorImage& image, int transform_index) {
  {
    std::ofstream out(path, std::ios::binary);
    for (double v : image.pixels) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  }
  nlohmann::json side;
  side["side"] = image.side;
  side["user"] = image.origin.user;
  side["granularity"] = granularity_name(image.origin.granularity);
  side["window_start"] = format_iso_datetime(image.origin.window_start);
  side["transform_index"] = transform_index;
  std::ofstream meta(path + ".json");
  meta << side.dump(2) << "\n";
}

}  // namespace itd
