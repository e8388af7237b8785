#include "bbpatch/dataset.h"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "bbpatch/errors.h"
#include "bbpatch/png_io.h"

namespace bbpatch {

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kFull:
      return "full";
    case SplitTag::kPatchTrain:
      return "train-patch";
    case SplitTag::kEval:
      return "eval";
  }
  return "full";
}

LabeledDataset::LabeledDataset(ImageShape shape, int num_classes, SplitTag tag)
    : shape_(shape), num_classes_(num_classes), tag_(tag) {
  check_shape(shape_);
  if (num_classes_ < 1) throw ArgumentError("num_classes must be positive");
}

LabeledDataset::LabeledDataset(ImageShape shape, int num_classes,
                               std::vector<Image> images,
                               std::vector<int> labels, SplitTag tag)
    : LabeledDataset(shape, num_classes, tag) {
  if (images.size() != labels.size())
    throw ConsistencyError("dataset has " + std::to_string(images.size()) +
                           " images but " + std::to_string(labels.size()) +
                           " labels");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != shape_)
      throw ConsistencyError("image " + std::to_string(i) + " has shape " +
                             images[i].shape().to_string() + ", expected " +
                             shape_.to_string());
    if (labels[i] < 0 || labels[i] >= num_classes_)
      throw ConsistencyError("label " + std::to_string(labels[i]) +
                             " of item " + std::to_string(i) +
                             " outside [0, " + std::to_string(num_classes_) +
                             ")");
  }
  images_ = std::move(images);
  labels_ = std::move(labels);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices,
                                      SplitTag tag) const {
  std::vector<Image> images;
  std::vector<int> labels;
  images.reserve(indices.size());
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ArgumentError("subset index out of range");
    images.push_back(images_[i]);
    labels.push_back(labels_[i]);
  }
  return LabeledDataset(shape_, num_classes_, std::move(images),
                        std::move(labels), tag);
}

LabeledDataset LabeledDataset::with_tag(SplitTag tag) const {
  LabeledDataset copy = *this;
  copy.tag_ = tag;
  return copy;
}

namespace {

class GzReader {
 public:
  explicit GzReader(const std::filesystem::path& path) : path_(path) {
    file_ = gzopen(path.c_str(), "rb");
    if (file_ == nullptr) throw IoError(path.string(), "cannot open");
  }
  ~GzReader() { gzclose(file_); }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, std::size_t n) {
    auto* out = static_cast<unsigned char*>(dst);
    while (n > 0) {
      const unsigned chunk =
          static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int got = gzread(file_, out, chunk);
      if (got <= 0)
        throw FormatError(path_.string() + ": truncated IDX file");
      out += got;
      n -= static_cast<std::size_t>(got);
    }
  }

  std::uint32_t read_be32() {
    std::array<unsigned char, 4> b{};
    read(b.data(), b.size());
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
  }

 private:
  std::filesystem::path path_;
  gzFile file_;
};

std::string hex(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setfill('0');
  os.width(8);
  os << v;
  return os.str();
}

}  // namespace

LabeledDataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path,
                                std::optional<std::size_t> limit) {
  GzReader images(images_path);
  GzReader labels(labels_path);

  const std::uint32_t image_magic = images.read_be32();
  if (image_magic != 0x00000803)
    throw FormatError(images_path.string() + ": bad IDX image magic " +
                      hex(image_magic) + " (expected 0x00000803)");
  const std::uint32_t label_magic = labels.read_be32();
  if (label_magic != 0x00000801)
    throw FormatError(labels_path.string() + ": bad IDX label magic " +
                      hex(label_magic) + " (expected 0x00000801)");

  const std::uint32_t n_images = images.read_be32();
  const std::uint32_t rows = images.read_be32();
  const std::uint32_t cols = images.read_be32();
  const std::uint32_t n_labels = labels.read_be32();
  if (n_images != n_labels)
    throw ConsistencyError("IDX image count " + std::to_string(n_images) +
                           " != label count " + std::to_string(n_labels));

  const ImageShape shape{static_cast<int>(rows), static_cast<int>(cols), 1};
  const std::size_t count =
      std::min<std::size_t>(limit.value_or(n_images), n_images);

  std::vector<Image> out_images;
  std::vector<int> out_labels;
  out_images.reserve(count);
  out_labels.reserve(count);
  std::vector<unsigned char> buffer(shape.size());
  std::vector<unsigned char> label_bytes(count);
  labels.read(label_bytes.data(), count);
  for (std::size_t i = 0; i < count; ++i) {
    images.read(buffer.data(), buffer.size());
    std::vector<float> pixels(buffer.size());
    std::transform(buffer.begin(), buffer.end(), pixels.begin(), byte_to_unit);
    out_images.emplace_back(shape, std::move(pixels));
    if (label_bytes[i] > 9)
      throw ConsistencyError(labels_path.string() + ": label " +
                             std::to_string(label_bytes[i]) + " outside [0, 9]");
    out_labels.push_back(label_bytes[i]);
  }
  return LabeledDataset(shape, 10, std::move(out_images),
                        std::move(out_labels));
}

LabeledDataset load_idx_directory(const std::filesystem::path& dir,
                                  std::optional<std::size_t> limit) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "not a directory");
  std::optional<fs::path> images, labels;
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) {
    const std::string name = p.filename().string();
    if (!images && name.find("images-idx3-ubyte") != std::string::npos)
      images = p;
    if (!labels && name.find("labels-idx1-ubyte") != std::string::npos)
      labels = p;
  }
  if (!images || !labels)
    throw IoError(dir.string(), "no *images-idx3-ubyte / *labels-idx1-ubyte pair");
  return load_idx_dataset(*images, *labels, limit);
}

LabeledDataset load_image_dir_dataset(const std::filesystem::path& root,
                                      const std::filesystem::path& manifest,
                                      std::optional<int> num_classes) {
  std::ifstream in(manifest);
  if (!in) throw IoError(manifest.string(), "cannot open manifest");

  std::optional<ImageShape> shape;
  std::optional<int> declared_classes = num_classes;
  std::vector<std::pair<std::string, int>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string key;
      ls >> key;
      if (key == "shape") {
        ImageShape s;
        if (!(ls >> s.height >> s.width >> s.channels))
          throw FormatError(manifest.string() + ":" + std::to_string(line_no) +
                            ": malformed #shape header");
        check_shape(s);
        shape = s;
      } else if (key == "classes") {
        int k = 0;
        if (!(ls >> k) || k < 1)
          throw FormatError(manifest.string() + ":" + std::to_string(line_no) +
                            ": malformed #classes header");
        if (!num_classes) declared_classes = k;
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) +
                        ": expected <path>TAB<label>");
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) +
                        ": bad label '" + line.substr(tab + 1) + "'");
    }
    entries.emplace_back(line.substr(0, tab), label);
  }
  if (!shape) throw FormatError(manifest.string() + ": missing #shape header");

  int k = 0;
  if (declared_classes) {
    k = *declared_classes;
  } else {
    for (const auto& [path, label] : entries) k = std::max(k, label + 1);
    k = std::max(k, 1);
  }
  std::vector<Image> images;
  std::vector<int> labels;
  for (const auto& [rel, label] : entries) {
    if (label < 0 || label >= k)
      throw ConsistencyError(rel + ": label " + std::to_string(label) +
                             " outside [0, " + std::to_string(k) + ")");
    const auto path = root / rel;
    Image img = read_png(path, shape->channels);
    images.push_back(resize_bilinear(img, shape->height, shape->width));
    labels.push_back(label);
  }
  return LabeledDataset(*shape, k, std::move(images), std::move(labels));
}

std::vector<std::size_t> split_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Fisher-Yates with our own index sampler; std::shuffle's algorithm is
  // implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& d,
                                                        std::size_t n_patch_train,
                                                        Rng& rng) {
  if (n_patch_train > d.size())
    throw ArgumentError("split_dataset: n_patch_train " +
                        std::to_string(n_patch_train) + " exceeds dataset size " +
                        std::to_string(d.size()));
  const auto order = split_permutation(d.size(), rng);
  const std::span<const std::size_t> all(order);
  return {d.subset(all.first(n_patch_train), SplitTag::kPatchTrain),
          d.subset(all.subspan(n_patch_train), SplitTag::kEval)};
}

LabeledDataset select_classes(const LabeledDataset& d,
                              std::span<const int> classes) {
  if (classes.empty()) throw ArgumentError("select_classes: empty class list");
  std::vector<int> remap(d.num_classes(), -1);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int c = classes[i];
    if (c < 0 || c >= d.num_classes())
      throw ArgumentError("select_classes: class " + std::to_string(c) +
                          " outside dataset range");
    if (remap[c] != -1)
      throw ArgumentError("select_classes: duplicate class " + std::to_string(c));
    remap[c] = static_cast<int>(i);
  }
  std::vector<Image> images;
  std::vector<int> labels;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int mapped = remap[d.label(i)];
    if (mapped < 0) continue;
    images.push_back(d.image(i));
    labels.push_back(mapped);
  }
  return LabeledDataset(d.shape(), static_cast<int>(classes.size()),
                        std::move(images), std::move(labels), d.split_tag());
}

}  // namespace bbpatch
