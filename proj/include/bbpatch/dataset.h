#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "bbpatch/image.h"
#include "bbpatch/rng.h"

namespace bbpatch {

enum class SplitTag { kFull, kPatchTrain, kEval };

std::string_view to_string(SplitTag tag);

// Images of one shape with class labels in [0, num_classes). The shape is
// kept even when the dataset is empty.
class LabeledDataset {
 public:
  LabeledDataset(ImageShape shape, int num_classes,
                 SplitTag tag = SplitTag::kFull);
  LabeledDataset(ImageShape shape, int num_classes, std::vector<Image> images,
                 std::vector<int> labels, SplitTag tag = SplitTag::kFull);

  const ImageShape& shape() const { return shape_; }
  int num_classes() const { return num_classes_; }
  SplitTag split_tag() const { return tag_; }
  std::size_t size() const { return images_.size(); }
  bool empty() const { return images_.empty(); }

  std::span<const Image> images() const { return images_; }
  std::span<const int> labels() const { return labels_; }
  const Image& image(std::size_t i) const { return images_[i]; }
  int label(std::size_t i) const { return labels_[i]; }

  LabeledDataset subset(std::span<const std::size_t> indices,
                        SplitTag tag) const;
  LabeledDataset with_tag(SplitTag tag) const;

 private:
  ImageShape shape_;
  int num_classes_;
  SplitTag tag_;
  std::vector<Image> images_;
  std::vector<int> labels_;
};

// Reads IDX image (magic 0x803) and label (magic 0x801) files. Gzipped files
// are decompressed transparently. num_classes is 10.
LabeledDataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path,
                                std::optional<std::size_t> limit = std::nullopt);

// Locates `*images-idx3-ubyte[.gz]` / `*labels-idx1-ubyte[.gz]` in `dir`.
LabeledDataset load_idx_directory(const std::filesystem::path& dir,
                                  std::optional<std::size_t> limit = std::nullopt);

// Manifest format (UTF-8):
//   #shape H W C
//   #classes K            (optional; defaults to the num_classes argument,
//                          then to max label + 1)
//   relative/path.png<TAB>label
// Every image is decoded to C channels and resized bilinearly to H x W.
LabeledDataset load_image_dir_dataset(const std::filesystem::path& root,
                                      const std::filesystem::path& manifest,
                                      std::optional<int> num_classes = std::nullopt);

// Seeded shuffle; the first part holds n_patch_train items tagged
// kPatchTrain, the rest kEval.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& d,
                                                        std::size_t n_patch_train,
                                                        Rng& rng);

// Shuffle the same way split_dataset does and return the permutation.
std::vector<std::size_t> split_permutation(std::size_t n, Rng& rng);

// Keeps only the listed classes and relabels them 0..k-1 in list order
// (e.g. {0, 1} gives the MNIST 0-vs-1 task).
LabeledDataset select_classes(const LabeledDataset& d,
                              std::span<const int> classes);

}  // namespace bbpatch
