#include "bbpatch/oracle.h"

#include <cmath>
#include <numeric>

#include "bbpatch/errors.h"

namespace bbpatch {

Probabilities validate_simplex(Probabilities p, int num_classes) {
  if (static_cast<int>(p.size()) != num_classes)
    throw TransportError("probability vector has " + std::to_string(p.size()) +
                         " entries, expected " + std::to_string(num_classes));
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v)) throw TransportError("non-finite probability");
    if (v < -kSimplexTolerance)
      throw TransportError("negative probability " + std::to_string(v));
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance)
    throw TransportError("probabilities sum to " + std::to_string(sum));
  double clipped_sum = 0.0;
  for (double& v : p) {
    v = std::max(v, 0.0);
    clipped_sum += v;
  }
  if (clipped_sum != 1.0)
    for (double& v : p) v /= clipped_sum;
  return p;
}

Oracle::Oracle(std::string id, ImageShape input_shape, int num_classes,
               int max_in_flight)
    : id_(std::move(id)),
      input_shape_(input_shape),
      num_classes_(num_classes),
      max_in_flight_(max_in_flight) {
  check_shape(input_shape_);
  if (num_classes_ < 1) throw ArgumentError("oracle needs at least one class");
  if (max_in_flight_ < 1) throw ArgumentError("max_in_flight must be >= 1");
}

std::vector<Probabilities> Oracle::classify_batch(std::span<const Image> images) {
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != input_shape_)
      throw ArgumentError("oracle " + id_ + " expects " +
                          input_shape_.to_string() + " images, image " +
                          std::to_string(i) + " is " +
                          images[i].shape().to_string());
  }
  if (images.empty()) return {};
  queries_.fetch_add(images.size());
  auto out = do_classify(images);
  if (out.size() != images.size())
    throw TransportError("oracle " + id_ + " returned " +
                         std::to_string(out.size()) + " results for " +
                         std::to_string(images.size()) + " images");
  for (auto& p : out) p = validate_simplex(std::move(p), num_classes_);
  return out;
}

Probabilities Oracle::classify(const Image& image) {
  return std::move(classify_batch(std::span<const Image>(&image, 1)).front());
}

int argmax(std::span<const double> p) {
  int best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = static_cast<int>(i);
  return best;
}

FunctionOracle::FunctionOracle(std::string id, ImageShape shape,
                               int num_classes, ClassifyFn fn,
                               int max_in_flight)
    : Oracle(std::move(id), shape, num_classes, max_in_flight),
      fn_(std::move(fn)) {}

std::vector<Probabilities> FunctionOracle::do_classify(
    std::span<const Image> images) {
  std::vector<Probabilities> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(fn_(img));
  return out;
}

ClassifyFn uniform_classifier(int num_classes) {
  return [num_classes](const Image&) {
    return Probabilities(num_classes, 1.0 / num_classes);
  };
}

ClassifyFn brightness_classifier() {
  return [](const Image& img) {
    const auto px = img.pixels();
    const double mean =
        std::accumulate(px.begin(), px.end(), 0.0) / static_cast<double>(px.size());
    return Probabilities{1.0 - mean, mean};
  };
}

std::unique_ptr<Oracle> make_uniform_oracle(ImageShape shape, int num_classes) {
  return std::make_unique<FunctionOracle>("stub:uniform", shape, num_classes,
                                          uniform_classifier(num_classes));
}

std::unique_ptr<Oracle> make_brightness_oracle(ImageShape shape) {
  return std::make_unique<FunctionOracle>("stub:brightness", shape, 2,
                                          brightness_classifier());
}

}  // namespace bbpatch
