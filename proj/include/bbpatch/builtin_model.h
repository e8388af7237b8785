#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "bbpatch/dataset.h"
#include "bbpatch/oracle.h"
#include "bbpatch/rng.h"

namespace bbpatch {

enum class ModelKind { kSoftmaxLinear, kMlp };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

struct ModelSpec {
  ModelKind kind = ModelKind::kSoftmaxLinear;
  std::vector<int> hidden;  // mlp only; ReLU between layers
};

struct DenseLayer {
  int inputs = 0;
  int outputs = 0;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> bias;     // outputs
};

// Desk-scale classifier: a stack of dense layers with ReLU between them and
// a softmax on top. A single layer is the softmax-linear model.
class BuiltinModel {
 public:
  // Zero weights everywhere; the zero model predicts the uniform vector.
  static BuiltinModel zeros(const ModelSpec& spec, ImageShape input_shape,
                            int num_classes);
  // He-normal initialization for layers followed by ReLU; the output layer
  // of any model and the softmax-linear model start at zero.
  static BuiltinModel initialized(const ModelSpec& spec, ImageShape input_shape,
                                  int num_classes, Rng& rng);

  ModelKind kind() const { return kind_; }
  const ImageShape& input_shape() const { return input_shape_; }
  int num_classes() const { return num_classes_; }
  std::vector<int> dims() const;
  std::span<const DenseLayer> layers() const { return layers_; }
  std::span<DenseLayer> mutable_layers() { return layers_; }

  const nlohmann::json& metadata() const { return metadata_; }
  nlohmann::json& metadata() { return metadata_; }

  std::vector<double> logits(std::span<const float> pixels) const;
  Probabilities predict(const Image& image) const;

  // JSON document: {"format":"bbpatch-model", kind, dims, input_shape,
  // metadata, layers:[{weights,bias}]} with weights as base64 of
  // little-endian float64. Serialization is deterministic.
  std::string serialize() const;
  static BuiltinModel deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static BuiltinModel load(const std::filesystem::path& path);

 private:
  BuiltinModel(ModelKind kind, ImageShape input_shape, int num_classes,
               std::vector<DenseLayer> layers);

  ModelKind kind_;
  ImageShape input_shape_;
  int num_classes_;
  std::vector<DenseLayer> layers_;
  nlohmann::json metadata_ = nlohmann::json::object();
};

std::vector<double> softmax(std::span<const double> logits);

struct TrainOptions {
  int epochs = 10;
  double learning_rate = 0.05;
  int batch_size = 32;
};

// Plain minibatch SGD on mean cross-entropy. Records final train loss and
// accuracy in metadata. Throws TrainingError when the loss turns non-finite.
BuiltinModel train_builtin(const LabeledDataset& d, const ModelSpec& spec,
                           const TrainOptions& options, Rng& rng);

// Mean cross-entropy and accuracy of a model over a dataset.
struct FitMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};
FitMetrics measure_fit(const BuiltinModel& model, const LabeledDataset& d);

// Read-only after construction, so classify_batch is fully concurrent.
class BuiltinOracle : public Oracle {
 public:
  BuiltinOracle(std::string id, std::shared_ptr<const BuiltinModel> model,
                int max_in_flight = 1);

  const BuiltinModel& model() const { return *model_; }

 protected:
  std::vector<Probabilities> do_classify(std::span<const Image> images) override;

 private:
  std::shared_ptr<const BuiltinModel> model_;
};

// Loads a model file; the oracle id is "builtin:<file stem>".
std::unique_ptr<BuiltinOracle> load_builtin_oracle(
    const std::filesystem::path& path, int max_in_flight = 1);

}  // namespace bbpatch
