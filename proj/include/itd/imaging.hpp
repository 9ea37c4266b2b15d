#pragma once

#include <string>
#include <vector>

#include "itd/features.hpp"

namespace itd {

struct ImageOrigin {
  std::string user;
  Granularity granularity = Granularity::Day;
  Timestamp window_start = 0;
  int label = -1;  // ground truth carried through for evaluation only
};

// d x d grayscale matrix, row-major. Built as the outer product of a
// normalized feature vector with itself, so it starts symmetric and rank one.
struct BehaviorImage {
  int side = 0;
  std::vector<double> pixels;  // side * side
  ImageOrigin origin;

  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * side + col]; }
  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * side + col]; }
};

BehaviorImage to_image(const FeatureVector& x);

// One candidate transformation: a composition of 90-degree rotation,
// one-pixel translation, horizontal flip, Gaussian blur and Laplacian
// sharpening. Application order is sharpen, blur, flip, translate, rotate.
struct TransformSpec {
  bool rotate90 = false;
  bool flip_h = false;
  bool blur = false;
  bool sharpen = false;
  int shift_h = 0;  // -1, 0, +1 rows
  int shift_w = 0;  // -1, 0, +1 cols
  int index = 0;    // label id within its set

  bool is_identity() const {
    return !rotate90 && !flip_h && !blur && !sharpen && shift_h == 0 && shift_w == 0;
  }
  // Flags on plus shift magnitude; the pruning tie-break.
  int active_ops() const {
    return (rotate90 ? 1 : 0) + (flip_h ? 1 : 0) + (blur ? 1 : 0) + (sharpen ? 1 : 0) +
           std::abs(shift_h) + std::abs(shift_w);
  }
  std::string name() const;
};

BehaviorImage apply_transform(const BehaviorImage& image, const TransformSpec& spec);

// Candidate enumeration. Geometric only: 36 (2 rotations x 2 flips x 9
// shifts). Non-geometric over every geometric spec: 144. Restricted to the 9
// shift-only specs: 63. The identity is always index 0.
std::vector<TransformSpec> candidate_set(bool include_non_geometric,
                                         bool restrict_non_geometric_to_shifts);

enum class TransformPolicy { Geometric36, Simplified63, Full144 };
std::vector<TransformSpec> candidate_set(TransformPolicy policy);

struct SelfLabelledItem {
  BehaviorImage image;
  int label = 0;
};

// K * |S| items, ordered image-major then transform-minor.
struct SelfLabelledSet {
  std::vector<SelfLabelledItem> items;
  std::size_t source_count = 0;
  std::size_t transform_count = 0;
};

SelfLabelledSet self_label(const std::vector<BehaviorImage>& images,
                           const std::vector<TransformSpec>& transforms);

// Human inspection dump (P5, maxval 255) and the canonical raw format
// (row-major little-endian float32 plus a JSON sidecar).
void write_pgm(const std::string& path, const BehaviorImage& image);
void write_raw_image(const std::string& path, const BehaviorImage& image, int transform_index);

}  // namespace itd
