#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "bbpatch/geometry.h"

namespace bbpatch {

void to_json(nlohmann::json& j, const TransformConfig& cfg);
void from_json(const nlohmann::json& j, TransformConfig& cfg);
void to_json(nlohmann::json& j, const AffineTransform& t);
void from_json(const nlohmann::json& j, AffineTransform& t);

struct PatchProvenance {
  std::string oracle_id;
  std::uint64_t seed = 0;
  std::uint64_t queries = 0;
  std::string config_hash;
  std::string tool_version;
};

struct PatchBundle {
  Patch patch;
  TransformConfig transform;
  PatchProvenance provenance;
};

// Writes <dir>/patch.png (8-bit rendering), <dir>/mask.png (0/255) and
// <dir>/meta.json. meta.json also carries the exact float32 pixels so a
// reload reproduces the optimized patch bit for bit; patch.png is used only
// when that blob is absent (hand-made bundles).
void save_patch_bundle(const std::filesystem::path& dir, const PatchBundle& b);
PatchBundle load_patch_bundle(const std::filesystem::path& dir);

}  // namespace bbpatch
