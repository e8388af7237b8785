#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bbpatch/image.h"

namespace bbpatch {

using Probabilities = std::vector<double>;

// Entries may undershoot 0 or miss a unit sum by at most this much; such
// responses are renormalized, anything worse is rejected.
inline constexpr double kSimplexTolerance = 1e-5;

// Checks and renormalizes one probability vector. Throws TransportError
// when the vector has the wrong length, a non-finite or clearly negative
// entry, or a sum outside 1 +/- kSimplexTolerance.
Probabilities validate_simplex(Probabilities p, int num_classes);

// Query-only classifier. classify_batch is the single entry point: it checks
// input shapes, charges the query counter with the batch size, forwards to
// the implementation and validates every returned vector.
//
// Implementations must tolerate up to max_in_flight() concurrent
// classify_batch calls.
class Oracle {
 public:
  Oracle(std::string id, ImageShape input_shape, int num_classes,
         int max_in_flight = 1);
  virtual ~Oracle() = default;
  Oracle(const Oracle&) = delete;
  Oracle& operator=(const Oracle&) = delete;

  const std::string& id() const { return id_; }
  const ImageShape& input_shape() const { return input_shape_; }
  int num_classes() const { return num_classes_; }
  int max_in_flight() const { return max_in_flight_; }
  std::uint64_t queries() const { return queries_.load(); }

  std::vector<Probabilities> classify_batch(std::span<const Image> images);
  Probabilities classify(const Image& image);

 protected:
  virtual std::vector<Probabilities> do_classify(
      std::span<const Image> images) = 0;

 private:
  std::string id_;
  ImageShape input_shape_;
  int num_classes_;
  int max_in_flight_;
  std::atomic<std::uint64_t> queries_{0};
};

// Index of the largest probability; ties go to the lowest index.
int argmax(std::span<const double> p);

// Test and conformance stubs ------------------------------------------------

using ClassifyFn = std::function<Probabilities(const Image&)>;

// Wraps a per-image function. Deterministic when the function is.
class FunctionOracle : public Oracle {
 public:
  FunctionOracle(std::string id, ImageShape shape, int num_classes,
                 ClassifyFn fn, int max_in_flight = 1);

 protected:
  std::vector<Probabilities> do_classify(std::span<const Image> images) override;

 private:
  ClassifyFn fn_;
};

// 1/K for every class.
ClassifyFn uniform_classifier(int num_classes);
// Two classes, p(class 1) = mean pixel value.
ClassifyFn brightness_classifier();

std::unique_ptr<Oracle> make_uniform_oracle(ImageShape shape, int num_classes);
std::unique_ptr<Oracle> make_brightness_oracle(ImageShape shape);

}  // namespace bbpatch
