#include "bbpatch/builtin_model.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bbpatch/encoding.h"
#include "bbpatch/errors.h"

namespace bbpatch {

using nlohmann::json;

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::kMlp ? "mlp" : "softmax-linear";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "mlp") return ModelKind::kMlp;
  if (name == "softmax-linear" || name == "linear")
    return ModelKind::kSoftmaxLinear;
  throw ArgumentError("unknown model kind '" + std::string(name) + "'");
}

namespace {

std::vector<int> layer_dims(const ModelSpec& spec, ImageShape shape, int k) {
  std::vector<int> dims{static_cast<int>(shape.size())};
  if (spec.kind == ModelKind::kMlp) {
    if (spec.hidden.empty())
      throw ArgumentError("mlp needs at least one hidden layer");
    for (int h : spec.hidden) {
      if (h < 1) throw ArgumentError("hidden layer sizes must be positive");
      dims.push_back(h);
    }
  } else if (!spec.hidden.empty()) {
    throw ArgumentError("softmax-linear model takes no hidden layers");
  }
  dims.push_back(k);
  return dims;
}

std::vector<DenseLayer> zero_layers(const std::vector<int>& dims) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l;
    l.inputs = dims[i];
    l.outputs = dims[i + 1];
    l.weights.assign(static_cast<std::size_t>(l.inputs) * l.outputs, 0.0);
    l.bias.assign(l.outputs, 0.0);
    layers.push_back(std::move(l));
  }
  return layers;
}

void dense_forward(const DenseLayer& l, std::span<const double> in,
                   std::vector<double>& out) {
  out.resize(l.outputs);
  for (int o = 0; o < l.outputs; ++o) {
    const double* w = l.weights.data() + static_cast<std::size_t>(o) * l.inputs;
    double acc = l.bias[o];
    for (int i = 0; i < l.inputs; ++i) acc += w[i] * in[i];
    out[o] = acc;
  }
}

}  // namespace

BuiltinModel::BuiltinModel(ModelKind kind, ImageShape input_shape,
                           int num_classes, std::vector<DenseLayer> layers)
    : kind_(kind),
      input_shape_(input_shape),
      num_classes_(num_classes),
      layers_(std::move(layers)) {
  check_shape(input_shape_);
  if (layers_.empty()) throw ArgumentError("model needs at least one layer");
  if (kind_ == ModelKind::kSoftmaxLinear && layers_.size() != 1)
    throw ArgumentError("softmax-linear model has exactly one layer");
  if (kind_ == ModelKind::kMlp && layers_.size() < 2)
    throw ArgumentError("mlp model needs a hidden layer");
  int expected_in = static_cast<int>(input_shape_.size());
  for (const auto& l : layers_) {
    if (l.inputs != expected_in)
      throw ConsistencyError("layer input size " + std::to_string(l.inputs) +
                             " does not chain from " +
                             std::to_string(expected_in));
    if (l.weights.size() != static_cast<std::size_t>(l.inputs) * l.outputs ||
        l.bias.size() != static_cast<std::size_t>(l.outputs))
      throw ConsistencyError("layer weight blob has the wrong size");
    expected_in = l.outputs;
  }
  if (expected_in != num_classes_)
    throw ConsistencyError("last layer has " + std::to_string(expected_in) +
                           " outputs for " + std::to_string(num_classes_) +
                           " classes");
}

BuiltinModel BuiltinModel::zeros(const ModelSpec& spec, ImageShape input_shape,
                                 int num_classes) {
  check_shape(input_shape);
  if (num_classes < 2) throw ArgumentError("models need at least two classes");
  return BuiltinModel(spec.kind, input_shape, num_classes,
                      zero_layers(layer_dims(spec, input_shape, num_classes)));
}

BuiltinModel BuiltinModel::initialized(const ModelSpec& spec,
                                       ImageShape input_shape, int num_classes,
                                       Rng& rng) {
  BuiltinModel m = zeros(spec, input_shape, num_classes);
  for (std::size_t i = 0; i + 1 < m.layers_.size(); ++i) {
    auto& l = m.layers_[i];
    const double stddev = std::sqrt(2.0 / l.inputs);
    for (double& w : l.weights) w = stddev * rng.normal();
  }
  return m;
}

std::vector<int> BuiltinModel::dims() const {
  std::vector<int> d{layers_.front().inputs};
  for (const auto& l : layers_) d.push_back(l.outputs);
  return d;
}

std::vector<double> BuiltinModel::logits(std::span<const float> pixels) const {
  if (pixels.size() != input_shape_.size())
    throw ArgumentError("model expects " + std::to_string(input_shape_.size()) +
                        " inputs");
  std::vector<double> a(pixels.begin(), pixels.end());
  std::vector<double> z;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    dense_forward(layers_[i], a, z);
    if (i + 1 < layers_.size())
      for (double& v : z) v = std::max(v, 0.0);
    a.swap(z);
  }
  return a;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

Probabilities BuiltinModel::predict(const Image& image) const {
  if (image.shape() != input_shape_)
    throw ArgumentError("model expects " + input_shape_.to_string() +
                        " images, got " + image.shape().to_string());
  return softmax(logits(image.pixels()));
}

std::string BuiltinModel::serialize() const {
  json layers = json::array();
  for (const auto& l : layers_)
    layers.push_back({{"inputs", l.inputs},
                      {"outputs", l.outputs},
                      {"weights", encode_f64(l.weights)},
                      {"bias", encode_f64(l.bias)}});
  const json doc{{"format", "bbpatch-model"},
                 {"version", 1},
                 {"kind", to_string(kind_)},
                 {"dims", dims()},
                 {"input_shape",
                  {input_shape_.height, input_shape_.width, input_shape_.channels}},
                 {"num_classes", num_classes_},
                 {"metadata", metadata_},
                 {"layers", layers}};
  return doc.dump(1) + "\n";
}

BuiltinModel BuiltinModel::deserialize(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string()) != "bbpatch-model")
      throw FormatError("not a bbpatch model file");
    const auto shape_arr = doc.at("input_shape").get<std::vector<int>>();
    if (shape_arr.size() != 3) throw FormatError("input_shape needs 3 entries");
    const ImageShape shape{shape_arr[0], shape_arr[1], shape_arr[2]};
    std::vector<DenseLayer> layers;
    for (const auto& jl : doc.at("layers")) {
      DenseLayer l;
      l.inputs = jl.at("inputs").get<int>();
      l.outputs = jl.at("outputs").get<int>();
      l.weights = decode_f64(jl.at("weights").get<std::string>());
      l.bias = decode_f64(jl.at("bias").get<std::string>());
      layers.push_back(std::move(l));
    }
    BuiltinModel m(model_kind_from_string(doc.at("kind").get<std::string>()),
                   shape, doc.at("num_classes").get<int>(), std::move(layers));
    if (doc.contains("dims") && doc.at("dims").get<std::vector<int>>() != m.dims())
      throw ConsistencyError("model dims header does not match layers");
    m.metadata_ = doc.value("metadata", json::object());
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
}

void BuiltinModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << serialize();
  if (!out) throw IoError(path.string(), "write failed");
}

BuiltinModel BuiltinModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open model file");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace {

constexpr double kLogFloor = 1e-300;

// Gradient accumulation buffers matching a model's layers.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  explicit Gradients(std::span<const DenseLayer> layers) {
    for (const auto& l : layers) {
      weights.emplace_back(l.weights.size(), 0.0);
      bias.emplace_back(l.bias.size(), 0.0);
    }
  }
  void clear() {
    for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
  }
};

// Forward + backward for one sample; returns the sample's cross-entropy.
double accumulate_sample(std::span<const DenseLayer> layers, const Image& x,
                         int label, Gradients& g,
                         std::vector<std::vector<double>>& acts) {
  const std::size_t n = layers.size();
  acts.resize(n + 1);
  acts[0].assign(x.pixels().begin(), x.pixels().end());
  for (std::size_t i = 0; i < n; ++i) {
    dense_forward(layers[i], acts[i], acts[i + 1]);
    if (i + 1 < n)
      for (double& v : acts[i + 1]) v = std::max(v, 0.0);
  }
  const auto p = softmax(acts[n]);
  const double loss = -std::log(std::max(p[label], kLogFloor));

  std::vector<double> delta = p;
  delta[label] -= 1.0;
  std::vector<double> prev;
  for (std::size_t li = n; li-- > 0;) {
    const auto& l = layers[li];
    const auto& in = acts[li];
    auto& gw = g.weights[li];
    auto& gb = g.bias[li];
    for (int o = 0; o < l.outputs; ++o) {
      const double d = delta[o];
      gb[o] += d;
      if (d == 0.0) continue;
      double* row = gw.data() + static_cast<std::size_t>(o) * l.inputs;
      for (int i = 0; i < l.inputs; ++i) row[i] += d * in[i];
    }
    if (li == 0) break;
    prev.assign(l.inputs, 0.0);
    for (int o = 0; o < l.outputs; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* w = l.weights.data() + static_cast<std::size_t>(o) * l.inputs;
      for (int i = 0; i < l.inputs; ++i) prev[i] += w[i] * d;
    }
    // ReLU derivative from the stored (post-activation) values.
    for (int i = 0; i < l.inputs; ++i)
      if (in[i] <= 0.0) prev[i] = 0.0;
    delta.swap(prev);
  }
  return loss;
}

}  // namespace

FitMetrics measure_fit(const BuiltinModel& model, const LabeledDataset& d) {
  FitMetrics m;
  if (d.empty()) return m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto p = model.predict(d.image(i));
    m.loss -= std::log(std::max(p[d.label(i)], kLogFloor));
    if (argmax(p) == d.label(i)) ++correct;
  }
  m.loss /= static_cast<double>(d.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(d.size());
  return m;
}

BuiltinModel train_builtin(const LabeledDataset& d, const ModelSpec& spec,
                           const TrainOptions& options, Rng& rng) {
  if (d.empty()) throw ArgumentError("train_builtin: empty dataset");
  if (options.epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (!(options.learning_rate > 0.0))
    throw ArgumentError("learning rate must be positive");
  if (options.batch_size < 1) throw ArgumentError("batch size must be >= 1");

  Rng init_rng = rng.derive("init");
  BuiltinModel model =
      BuiltinModel::initialized(spec, d.shape(), d.num_classes(), init_rng);
  auto layers = model.mutable_layers();
  Gradients grads(layers);
  std::vector<std::vector<double>> acts;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Rng order_rng = rng.derive("epoch", static_cast<std::uint64_t>(epoch));
    const auto order = split_permutation(d.size(), order_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(options.batch_size));
      grads.clear();
      for (std::size_t k = start; k < end; ++k)
        epoch_loss += accumulate_sample(layers, d.image(order[k]),
                                        d.label(order[k]), grads, acts);
      const double step = options.learning_rate / static_cast<double>(end - start);
      for (std::size_t li = 0; li < layers.size(); ++li) {
        auto& l = layers[li];
        for (std::size_t i = 0; i < l.weights.size(); ++i)
          l.weights[i] -= step * grads.weights[li][i];
        for (std::size_t i = 0; i < l.bias.size(); ++i)
          l.bias[i] -= step * grads.bias[li][i];
      }
    }
    if (!std::isfinite(epoch_loss))
      throw TrainingError("training diverged in epoch " + std::to_string(epoch));
  }

  const FitMetrics fit = measure_fit(model, d);
  if (!std::isfinite(fit.loss)) throw TrainingError("final training loss is non-finite");
  auto& meta = model.metadata();
  meta["epochs"] = options.epochs;
  meta["learning_rate"] = options.learning_rate;
  meta["batch_size"] = options.batch_size;
  meta["seed"] = rng.seed();
  meta["train_size"] = d.size();
  meta["train_loss"] = fit.loss;
  meta["train_accuracy"] = fit.accuracy;
  if (spec.kind == ModelKind::kMlp) meta["hidden"] = spec.hidden;
  return model;
}

BuiltinOracle::BuiltinOracle(std::string id,
                             std::shared_ptr<const BuiltinModel> model,
                             int max_in_flight)
    : Oracle(std::move(id), model->input_shape(), model->num_classes(),
             max_in_flight),
      model_(std::move(model)) {}

std::vector<Probabilities> BuiltinOracle::do_classify(
    std::span<const Image> images) {
  std::vector<Probabilities> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(model_->predict(img));
  return out;
}

std::unique_ptr<BuiltinOracle> load_builtin_oracle(
    const std::filesystem::path& path, int max_in_flight) {
  auto model = std::make_shared<const BuiltinModel>(BuiltinModel::load(path));
  return std::make_unique<BuiltinOracle>("builtin:" + path.stem().string(),
                                         std::move(model), max_in_flight);
}

}  // namespace bbpatch
