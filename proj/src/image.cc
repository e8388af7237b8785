#include "bbpatch/image.h"

#include <algorithm>
#include <cmath>

#include "bbpatch/errors.h"

namespace bbpatch {

std::string ImageShape::to_string() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" +
         std::to_string(channels);
}

void check_shape(const ImageShape& shape) {
  if (shape.height < 1 || shape.width < 1)
    throw ArgumentError("image shape " + shape.to_string() +
                        ": height and width must be >= 1");
  if (shape.channels != 1 && shape.channels != 3)
    throw ArgumentError("image shape " + shape.to_string() +
                        ": channels must be 1 or 3");
}

Image::Image(ImageShape shape, std::vector<float> pixels)
    : shape_(shape), pixels_(std::move(pixels)) {
  check_shape(shape_);
  if (pixels_.size() != shape_.size())
    throw ArgumentError("image " + shape_.to_string() + " needs " +
                        std::to_string(shape_.size()) + " values, got " +
                        std::to_string(pixels_.size()));
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f))
      throw ArgumentError("pixel value " + std::to_string(v) +
                          " outside [0, 1]");
  }
}

Image::Image(ImageShape shape, float value)
    : Image(shape, std::vector<float>(shape.size(), value)) {}

float byte_to_unit(unsigned char b) { return static_cast<float>(b) / 255.0f; }

unsigned char unit_to_byte(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(clamped * 255.0f));
}

Image resize_bilinear(const Image& src, int height, int width) {
  if (src.height() == height && src.width() == width) return src;
  const ImageShape out_shape{height, width, src.channels()};
  check_shape(out_shape);
  std::vector<float> out(out_shape.size());
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0,
                                static_cast<double>(src.height() - 1));
    const int y0 = static_cast<int>(std::floor(y));
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0,
                                  static_cast<double>(src.width() - 1));
      const int x0 = static_cast<int>(std::floor(x));
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double fx = x - x0;
      for (int ch = 0; ch < src.channels(); ++ch) {
        const double top =
            src.at(y0, x0, ch) * (1 - fx) + src.at(y0, x1, ch) * fx;
        const double bottom =
            src.at(y1, x0, ch) * (1 - fx) + src.at(y1, x1, ch) * fx;
        const double v = top * (1 - fy) + bottom * fy;
        out[(static_cast<std::size_t>(r) * width + c) * src.channels() + ch] =
            std::clamp(static_cast<float>(v), 0.0f, 1.0f);
      }
    }
  }
  return Image(out_shape, std::move(out));
}

}  // namespace bbpatch
