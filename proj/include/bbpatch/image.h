#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bbpatch {

struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  bool operator==(const ImageShape&) const = default;
  std::string to_string() const;
};

// Validates height/width >= 1 and channels in {1, 3}; throws ArgumentError.
void check_shape(const ImageShape& shape);

// H x W x C image with pixel values in [0, 1], stored row-major in HWC order.
// Immutable after construction; the constructor enforces the range invariant.
class Image {
 public:
  Image() = default;
  Image(ImageShape shape, std::vector<float> pixels);
  // Filled with a constant value.
  Image(ImageShape shape, float value);

  const ImageShape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }

  float at(int row, int col, int channel) const {
    return pixels_[index(row, col, channel)];
  }
  std::span<const float> pixels() const { return pixels_; }

  std::size_t index(int row, int col, int channel) const {
    return (static_cast<std::size_t>(row) * shape_.width + col) *
               shape_.channels +
           channel;
  }

  bool operator==(const Image&) const = default;

 private:
  ImageShape shape_;
  std::vector<float> pixels_;
};

// 8-bit conversions: byte / 255 in, round(v * 255) out.
float byte_to_unit(unsigned char b);
unsigned char unit_to_byte(float v);

// Bilinear resize with pixel-center alignment. Identity when shapes match.
Image resize_bilinear(const Image& src, int height, int width);

}  // namespace bbpatch
