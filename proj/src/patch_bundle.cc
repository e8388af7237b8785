#include "bbpatch/patch_bundle.h"

#include <fstream>

#include "bbpatch/encoding.h"
#include "bbpatch/errors.h"
#include "bbpatch/png_io.h"

namespace bbpatch {

using nlohmann::json;

void to_json(json& j, const TransformConfig& cfg) {
  j = json{{"max_rotation", cfg.max_rotation},
           {"min_scale", cfg.min_scale},
           {"max_scale", cfg.max_scale},
           {"location", cfg.location == LocationPolicy::kFixed ? "fixed"
                                                               : "anywhere"}};
  if (cfg.location == LocationPolicy::kFixed) {
    j["fixed_row"] = cfg.fixed_row;
    j["fixed_col"] = cfg.fixed_col;
  }
}

void from_json(const json& j, TransformConfig& cfg) {
  cfg = TransformConfig{};
  cfg.max_rotation = j.value("max_rotation", 0.0);
  cfg.min_scale = j.value("min_scale", 1.0);
  cfg.max_scale = j.value("max_scale", cfg.min_scale);
  const std::string location = j.value("location", std::string("anywhere"));
  if (location == "fixed") {
    cfg.location = LocationPolicy::kFixed;
    cfg.fixed_row = j.at("fixed_row").get<double>();
    cfg.fixed_col = j.at("fixed_col").get<double>();
  } else if (location == "anywhere") {
    cfg.location = LocationPolicy::kAnywhere;
  } else {
    throw FormatError("unknown location policy '" + location + "'");
  }
  cfg.validate();
}

void to_json(json& j, const AffineTransform& t) {
  j = json{{"rotation", t.rotation},
           {"scale", t.scale},
           {"center_row", t.center_row},
           {"center_col", t.center_col}};
}

void from_json(const json& j, AffineTransform& t) {
  t.rotation = j.value("rotation", 0.0);
  t.scale = j.value("scale", 1.0);
  t.center_row = j.at("center_row").get<double>();
  t.center_col = j.at("center_col").get<double>();
}

namespace {

Image patch_rendering(const Patch& p) {
  return Image(ImageShape{p.side(), p.side(), p.channels()},
               std::vector<float>(p.pixels().begin(), p.pixels().end()));
}

Image mask_rendering(const Patch& p) {
  std::vector<float> values(p.mask().size());
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = p.mask()[i] ? 1.0f : 0.0f;
  return Image(ImageShape{p.side(), p.side(), 1}, std::move(values));
}

}  // namespace

void save_patch_bundle(const std::filesystem::path& dir, const PatchBundle& b) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), ec.message());

  write_png(dir / "patch.png", patch_rendering(b.patch));
  write_png(dir / "mask.png", mask_rendering(b.patch));

  json meta{{"format", "bbpatch-patch"},
            {"version", 1},
            {"side", b.patch.side()},
            {"channels", b.patch.channels()},
            {"pixels_f32", encode_f32(b.patch.pixels())},
            {"transform", b.transform},
            {"provenance",
             {{"oracle_id", b.provenance.oracle_id},
              {"seed", b.provenance.seed},
              {"queries", b.provenance.queries},
              {"config_hash", b.provenance.config_hash},
              {"tool_version", b.provenance.tool_version}}}};
  const auto path = dir / "meta.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << meta.dump(2) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

PatchBundle load_patch_bundle(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream in(meta_path, std::ios::binary);
  if (!in) throw IoError(meta_path.string(), "cannot open patch bundle");
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }

  try {
    const int side = meta.at("side").get<int>();
    const int channels = meta.at("channels").get<int>();

    const Image mask_image = read_png(dir / "mask.png", 1);
    if (mask_image.height() != side || mask_image.width() != side)
      throw ConsistencyError(dir.string() + ": mask.png does not match side " +
                             std::to_string(side));
    std::vector<std::uint8_t> mask(mask_image.pixels().size());
    for (std::size_t i = 0; i < mask.size(); ++i)
      mask[i] = mask_image.pixels()[i] >= 0.5f ? 1 : 0;

    std::vector<float> pixels;
    if (meta.contains("pixels_f32")) {
      pixels = decode_f32(meta.at("pixels_f32").get<std::string>());
    } else {
      const Image rendering = read_png(dir / "patch.png", channels);
      if (rendering.height() != side || rendering.width() != side)
        throw ConsistencyError(dir.string() + ": patch.png does not match side");
      pixels.assign(rendering.pixels().begin(), rendering.pixels().end());
    }

    PatchBundle b;
    b.patch = Patch(side, channels, std::move(pixels), std::move(mask));
    if (meta.contains("transform"))
      b.transform = meta.at("transform").get<TransformConfig>();
    if (meta.contains("provenance")) {
      const auto& p = meta.at("provenance");
      b.provenance.oracle_id = p.value("oracle_id", std::string());
      b.provenance.seed = p.value("seed", std::uint64_t{0});
      b.provenance.queries = p.value("queries", std::uint64_t{0});
      b.provenance.config_hash = p.value("config_hash", std::string());
      b.provenance.tool_version = p.value("tool_version", std::string());
    }
    return b;
  } catch (const json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
}

}  // namespace bbpatch
