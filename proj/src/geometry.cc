#include "bbpatch/geometry.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bbpatch/errors.h"

namespace bbpatch {

std::string_view to_string(MaskShape shape) {
  return shape == MaskShape::kCircle ? "circle" : "square";
}

MaskShape mask_shape_from_string(std::string_view name) {
  if (name == "square") return MaskShape::kSquare;
  if (name == "circle") return MaskShape::kCircle;
  throw ArgumentError("unknown mask shape '" + std::string(name) + "'");
}

std::vector<std::uint8_t> make_mask(int side, MaskShape shape) {
  if (side < 1) throw ArgumentError("mask side must be >= 1");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(side) * side, 1);
  if (shape == MaskShape::kCircle) {
    const double c = side / 2.0;
    const double r2 = c * c;
    for (int r = 0; r < side; ++r) {
      for (int col = 0; col < side; ++col) {
        const double dy = r + 0.5 - c;
        const double dx = col + 0.5 - c;
        mask[static_cast<std::size_t>(r) * side + col] =
            dx * dx + dy * dy <= r2 ? 1 : 0;
      }
    }
  }
  return mask;
}

Patch::Patch(int side, int channels, std::vector<float> pixels,
             std::vector<std::uint8_t> mask)
    : side_(side),
      channels_(channels),
      pixels_(std::move(pixels)),
      mask_(std::move(mask)) {
  if (side_ < 1) throw ArgumentError("patch side must be >= 1");
  if (channels_ != 1 && channels_ != 3)
    throw ArgumentError("patch channels must be 1 or 3");
  const std::size_t area = static_cast<std::size_t>(side_) * side_;
  if (pixels_.size() != area * channels_)
    throw ArgumentError("patch pixel count " + std::to_string(pixels_.size()) +
                        " does not match side " + std::to_string(side_) +
                        " x channels " + std::to_string(channels_));
  if (mask_.size() != area)
    throw ArgumentError("patch mask size does not match side");
  for (float v : pixels_)
    if (!(v >= 0.0f && v <= 1.0f))
      throw ArgumentError("patch pixel " + std::to_string(v) + " outside [0, 1]");
  for (auto m : mask_)
    if (m > 1) throw ArgumentError("patch mask values must be 0 or 1");
}

Patch::Patch(int side, int channels, std::vector<float> pixels)
    : Patch(side, channels, std::move(pixels),
            make_mask(side, MaskShape::kSquare)) {}

Patch Patch::with_pixels(std::vector<float> pixels) const {
  return Patch(side_, channels_, std::move(pixels), mask_);
}

AffineTransform aligned_transform(int side, int top, int left) {
  return AffineTransform{0.0, 1.0, top + side / 2.0, left + side / 2.0};
}

void TransformConfig::validate() const {
  if (!(min_scale > 0.0) || !(min_scale <= max_scale))
    throw ArgumentError("transform config: need 0 < min_scale <= max_scale");
  if (!(max_rotation >= 0.0 && max_rotation <= std::numbers::pi))
    throw ArgumentError("transform config: max_rotation must lie in [0, pi]");
}

double transformed_half_extent(int side, double rotation, double scale) {
  return scale * side / 2.0 *
         (std::abs(std::cos(rotation)) + std::abs(std::sin(rotation)));
}

namespace {

constexpr double kFitSlack = 1e-9;

bool center_fits(double center, double half, int extent) {
  return center - half >= -kFitSlack && center + half <= extent + kFitSlack;
}

}  // namespace

bool transform_fits(const AffineTransform& t, int side, const ImageShape& canvas) {
  if (!(t.scale > 0.0)) return false;
  const double h = transformed_half_extent(side, t.rotation, t.scale);
  return center_fits(t.center_row, h, canvas.height) &&
         center_fits(t.center_col, h, canvas.width);
}

AffineTransform sample_transform(const TransformConfig& cfg,
                                 const ImageShape& image_shape, int patch_side,
                                 Rng& rng) {
  cfg.validate();
  if (patch_side < 1) throw ArgumentError("patch side must be >= 1");
  const int limit = std::min(image_shape.height, image_shape.width);
  if (cfg.min_scale * patch_side > limit + kFitSlack)
    throw GeometryError("patch of side " + std::to_string(patch_side) +
                        " at scale " + std::to_string(cfg.min_scale) +
                        " cannot fit inside a " + image_shape.to_string() +
                        " image");

  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    AffineTransform t;
    t.rotation = cfg.max_rotation > 0.0
                     ? rng.uniform(-cfg.max_rotation, cfg.max_rotation)
                     : 0.0;
    t.scale = cfg.max_scale > cfg.min_scale
                  ? rng.uniform(cfg.min_scale, cfg.max_scale)
                  : cfg.min_scale;
    const double h = transformed_half_extent(patch_side, t.rotation, t.scale);
    if (cfg.location == LocationPolicy::kFixed) {
      t.center_row = cfg.fixed_row;
      t.center_col = cfg.fixed_col;
      if (transform_fits(t, patch_side, image_shape)) return t;
      continue;
    }
    if (2.0 * h > limit + kFitSlack) continue;
    const double row_span = std::max(0.0, image_shape.height - 2.0 * h);
    const double col_span = std::max(0.0, image_shape.width - 2.0 * h);
    t.center_row = h + row_span * rng.uniform();
    t.center_col = h + col_span * rng.uniform();
    return t;
  }
  throw GeometryError("no valid placement for a patch of side " +
                      std::to_string(patch_side) + " in a " +
                      image_shape.to_string() + " image");
}

namespace {

// Inverse map from canvas coordinates to patch index coordinates, where the
// patch pixel (i, j) is centred on index coordinate (i, j).
struct InverseMap {
  double cos_t, sin_t, inv_scale, half_side, row0, col0;

  InverseMap(const AffineTransform& t, int side)
      : cos_t(std::cos(t.rotation)),
        sin_t(std::sin(t.rotation)),
        inv_scale(1.0 / t.scale),
        half_side(side / 2.0),
        row0(t.center_row),
        col0(t.center_col) {}

  // Returns (row, col) in patch index space for the canvas pixel centre.
  std::pair<double, double> operator()(int r, int c) const {
    const double dy = r + 0.5 - row0;
    const double dx = c + 0.5 - col0;
    const double px = (cos_t * dx + sin_t * dy) * inv_scale;
    const double py = (-sin_t * dx + cos_t * dy) * inv_scale;
    return {py + half_side - 0.5, px + half_side - 0.5};
  }
};

struct Bilinear {
  int r0, c0;
  double fr, fc;
};

Bilinear bilinear_at(double row, double col) {
  const double fr0 = std::floor(row);
  const double fc0 = std::floor(col);
  return {static_cast<int>(fr0), static_cast<int>(fc0), row - fr0, col - fc0};
}

// Mask coverage with zero padding outside the patch.
double mask_coverage(const Patch& p, const Bilinear& b) {
  auto at = [&](int r, int c) -> double {
    if (r < 0 || c < 0 || r >= p.side() || c >= p.side()) return 0.0;
    return p.owns(r, c) ? 1.0 : 0.0;
  };
  const double top = at(b.r0, b.c0) * (1 - b.fc) + at(b.r0, b.c0 + 1) * b.fc;
  const double bottom =
      at(b.r0 + 1, b.c0) * (1 - b.fc) + at(b.r0 + 1, b.c0 + 1) * b.fc;
  return top * (1 - b.fr) + bottom * b.fr;
}

// Pixel value with clamp-to-edge so border pixels are not darkened.
float sample_pixel(const Patch& p, const Bilinear& b, int channel) {
  const int last = p.side() - 1;
  auto at = [&](int r, int c) -> double {
    return p.pixel(std::clamp(r, 0, last), std::clamp(c, 0, last), channel);
  };
  // Skip zero-weight taps so exact alignment reproduces pixels bit for bit.
  if (b.fr == 0.0 && b.fc == 0.0) return static_cast<float>(at(b.r0, b.c0));
  const double top = at(b.r0, b.c0) * (1 - b.fc) + at(b.r0, b.c0 + 1) * b.fc;
  const double bottom =
      at(b.r0 + 1, b.c0) * (1 - b.fc) + at(b.r0 + 1, b.c0 + 1) * b.fc;
  return std::clamp(static_cast<float>(top * (1 - b.fr) + bottom * b.fr), 0.0f,
                    1.0f);
}

// Calls visit(r, c, bilinear) for every canvas pixel owned by the warped mask.
template <typename Visit>
void for_each_covered(const Patch& p, const AffineTransform& t,
                      const ImageShape& canvas, Visit&& visit) {
  if (!transform_fits(t, p.side(), canvas))
    throw GeometryError("transformed patch does not fit inside the " +
                        canvas.to_string() + " canvas");
  const double h = transformed_half_extent(p.side(), t.rotation, t.scale);
  const int r_lo = std::max(0, static_cast<int>(std::floor(t.center_row - h)) - 1);
  const int r_hi =
      std::min(canvas.height - 1, static_cast<int>(std::ceil(t.center_row + h)));
  const int c_lo = std::max(0, static_cast<int>(std::floor(t.center_col - h)) - 1);
  const int c_hi =
      std::min(canvas.width - 1, static_cast<int>(std::ceil(t.center_col + h)));
  const InverseMap inverse(t, p.side());
  for (int r = r_lo; r <= r_hi; ++r) {
    for (int c = c_lo; c <= c_hi; ++c) {
      const auto [pr, pc] = inverse(r, c);
      const Bilinear b = bilinear_at(pr, pc);
      if (mask_coverage(p, b) >= 0.5) visit(r, c, b);
    }
  }
}

}  // namespace

WarpedPatch warp_patch(const Patch& p, const AffineTransform& t,
                       const ImageShape& canvas) {
  if (p.channels() != canvas.channels)
    throw ArgumentError("patch has " + std::to_string(p.channels()) +
                        " channels, canvas has " +
                        std::to_string(canvas.channels));
  WarpedPatch out;
  out.canvas = canvas;
  out.pixels.assign(canvas.size(), 0.0f);
  out.mask.assign(static_cast<std::size_t>(canvas.height) * canvas.width, 0);
  for_each_covered(p, t, canvas, [&](int r, int c, const Bilinear& b) {
    const std::size_t pix = static_cast<std::size_t>(r) * canvas.width + c;
    out.mask[pix] = 1;
    for (int ch = 0; ch < canvas.channels; ++ch)
      out.pixels[pix * canvas.channels + ch] = sample_pixel(p, b, ch);
  });
  return out;
}

Image apply_patch(const Image& x, const Patch& p, const AffineTransform& t) {
  if (p.channels() != x.channels())
    throw ArgumentError("patch has " + std::to_string(p.channels()) +
                        " channels, image has " + std::to_string(x.channels()));
  std::vector<float> out(x.pixels().begin(), x.pixels().end());
  for_each_covered(p, t, x.shape(), [&](int r, int c, const Bilinear& b) {
    for (int ch = 0; ch < x.channels(); ++ch)
      out[x.index(r, c, ch)] = sample_pixel(p, b, ch);
  });
  return Image(x.shape(), std::move(out));
}

}  // namespace bbpatch
