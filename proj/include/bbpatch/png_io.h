#pragma once

#include <filesystem>
#include <optional>

#include "bbpatch/image.h"

namespace bbpatch {

// Decodes an 8-bit PNG. When `channels` is given the decoder converts to
// gray (1) or RGB (3); otherwise the file's own color type decides (alpha is
// dropped, palette expanded). Throws FormatError naming the path.
Image read_png(const std::filesystem::path& path,
               std::optional<int> channels = std::nullopt);

// Writes 8-bit gray or RGB, pixels rounded with unit_to_byte.
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace bbpatch
