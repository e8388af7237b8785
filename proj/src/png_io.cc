#include "bbpatch/png_io.h"

#include <png.h>

#include <cstring>
#include <vector>

#include "bbpatch/errors.h"

namespace bbpatch {

namespace {

struct PngImageGuard {
  png_image* image;
  ~PngImageGuard() { png_image_free(image); }
};

}  // namespace

Image read_png(const std::filesystem::path& path,
               std::optional<int> channels) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  PngImageGuard guard{&png};
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw FormatError(path.string() + ": cannot decode PNG: " + png.message);

  int out_channels = channels.value_or(
      (png.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1);
  if (out_channels != 1 && out_channels != 3)
    throw ArgumentError("read_png: channels must be 1 or 3");
  png.format = out_channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  const ImageShape shape{static_cast<int>(png.height),
                         static_cast<int>(png.width), out_channels};
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr))
    throw FormatError(path.string() + ": cannot decode PNG: " + png.message);

  std::vector<float> pixels(shape.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = byte_to_unit(buffer[i]);
  return Image(shape, std::move(pixels));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  std::vector<png_byte> buffer(image.pixels().size());
  for (std::size_t i = 0; i < buffer.size(); ++i)
    buffer[i] = unit_to_byte(image.pixels()[i]);
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0,
                               nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw IoError(path.string(), "cannot write PNG: " + message);
  }
}

}  // namespace bbpatch
