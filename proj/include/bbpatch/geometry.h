#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bbpatch/image.h"
#include "bbpatch/rng.h"

namespace bbpatch {

enum class MaskShape { kSquare, kCircle };

std::string_view to_string(MaskShape shape);
MaskShape mask_shape_from_string(std::string_view name);

// side x side binary mask, 1 = patch-owned pixel.
std::vector<std::uint8_t> make_mask(int side, MaskShape shape);

// Square patch: pixel values z (HWC, side x side x channels) in [0, 1] plus a
// binary ownership mask m (side x side).
class Patch {
 public:
  Patch() = default;
  Patch(int side, int channels, std::vector<float> pixels,
        std::vector<std::uint8_t> mask);
  // All-ones square mask.
  Patch(int side, int channels, std::vector<float> pixels);

  int side() const { return side_; }
  int channels() const { return channels_; }
  std::span<const float> pixels() const { return pixels_; }
  std::span<const std::uint8_t> mask() const { return mask_; }

  float pixel(int row, int col, int channel) const {
    return pixels_[(static_cast<std::size_t>(row) * side_ + col) * channels_ +
                   channel];
  }
  bool owns(int row, int col) const {
    return mask_[static_cast<std::size_t>(row) * side_ + col] != 0;
  }

  std::size_t num_values() const { return pixels_.size(); }
  Patch with_pixels(std::vector<float> pixels) const;

  bool operator==(const Patch&) const = default;

 private:
  int side_ = 0;
  int channels_ = 0;
  std::vector<float> pixels_;
  std::vector<std::uint8_t> mask_;
};

// One transformation draw. Coordinates are continuous with the image's
// top-left corner at (0, 0) and pixel (r, c) covering [r, r+1) x [c, c+1);
// the patch center sits at (center_row, center_col). Rotation is applied in
// (col, row) coordinates with the standard matrix, which reads as clockwise
// on screen because rows grow downwards.
struct AffineTransform {
  double rotation = 0.0;
  double scale = 1.0;
  double center_row = 0.0;
  double center_col = 0.0;

  bool operator==(const AffineTransform&) const = default;
};

// Transform placing an unrotated, unscaled patch with its top-left pixel at
// (top, left); integer offsets give exact pixel alignment.
AffineTransform aligned_transform(int side, int top, int left);

enum class LocationPolicy { kAnywhere, kFixed };

struct TransformConfig {
  double max_rotation = 0.0;  // radians, sampled from [-max, max]
  double min_scale = 1.0;
  double max_scale = 1.0;
  LocationPolicy location = LocationPolicy::kAnywhere;
  double fixed_row = 0.0;
  double fixed_col = 0.0;

  bool operator==(const TransformConfig&) const = default;

  // Throws ArgumentError on 0 < min <= max or rotation range violations.
  void validate() const;
};

// Half the side of the axis-aligned bounding box of the transformed patch.
double transformed_half_extent(int side, double rotation, double scale);

bool transform_fits(const AffineTransform& t, int side, const ImageShape& canvas);

// Draws rotation and scale uniformly, then a center uniformly over the
// positions that keep the transformed patch inside the image. Draws whose
// rotation/scale cannot fit are redrawn (bounded), so the ranges are sampled
// uniformly conditioned on fitting. Throws GeometryError when even the
// smallest unrotated patch is larger than the image, or a fixed location
// cannot host the patch.
AffineTransform sample_transform(const TransformConfig& cfg,
                                 const ImageShape& image_shape, int patch_side,
                                 Rng& rng);

struct WarpedPatch {
  ImageShape canvas;
  std::vector<float> pixels;       // canvas.size(); 0 outside the mask
  std::vector<std::uint8_t> mask;  // canvas height * width
};

// t(m ⊙ z) and the support of t(m): patch pixels sampled bilinearly through
// the inverse map, mask sampled the same way and thresholded at 0.5.
WarpedPatch warp_patch(const Patch& p, const AffineTransform& t,
                       const ImageShape& canvas);

// p_t(x, z) = t(m ⊙ z) + t(1 - m) ⊙ x. The two terms have disjoint support,
// so this is evaluated as a per-pixel select on the warped mask.
Image apply_patch(const Image& x, const Patch& p, const AffineTransform& t);

}  // namespace bbpatch
