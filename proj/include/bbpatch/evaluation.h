#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bbpatch/dataset.h"
#include "bbpatch/errors.h"
#include "bbpatch/geometry.h"
#include "bbpatch/oracle.h"

namespace bbpatch {

using ConfusionMatrix = std::vector<std::vector<std::uint64_t>>;  // [true][pred]

struct EvalReport {
  std::string oracle_id;
  std::string patch_source;  // oracle the patch was trained on, if known
  std::string dataset_tag;
  std::uint64_t n = 0;
  double clean_accuracy = 0.0;
  std::optional<double> patched_accuracy;
  ConfusionMatrix clean_confusion;
  ConfusionMatrix patched_confusion;  // empty without a patch
  TransformConfig policy;
  std::uint64_t seed = 0;

  bool operator==(const EvalReport&) const = default;
};

class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::size_t first_image)
      : Error("images from " + std::to_string(first_image) + ": " + what),
        first_image_(first_image) {}
  std::size_t first_image() const { return first_image_; }

 private:
  std::size_t first_image_;
};

// Clean accuracy on raw images; with a patch, patched accuracy with one
// transform per image drawn in dataset order from `rng`. Predictions are
// argmax with ties to the lowest index. Oracle failures are rethrown as
// EvaluationError carrying the first image index of the failing chunk.
EvalReport evaluate(Oracle& oracle, const LabeledDataset& d, const Patch* patch,
                    const TransformConfig& policy, Rng& rng,
                    std::size_t chunk = 256);

// Patched accuracy only (no clean pass); used for in-run stop checks.
double patched_accuracy(Oracle& oracle, const LabeledDataset& d,
                        const Patch& patch, const TransformConfig& policy,
                        Rng& rng, std::size_t chunk = 256);

struct NamedPatch {
  std::string trained_on;  // oracle id
  Patch patch;
};

struct TransferCell {
  std::optional<EvalReport> report;
  std::string error;  // set when the cell failed

  bool operator==(const TransferCell&) const = default;
};

struct TransferMatrix {
  std::vector<std::string> trained_on;  // rows
  std::vector<std::string> tested_on;   // columns
  std::vector<std::vector<TransferCell>> cells;

  bool operator==(const TransferMatrix&) const = default;
};

// Every (patch, oracle) pair. All cells of one row share that row's
// transform draws, so columns differ only in the oracle. A failing cell is
// recorded and the others still run.
TransferMatrix transfer_matrix(std::span<const NamedPatch> patches,
                               std::span<Oracle* const> oracles,
                               const LabeledDataset& d,
                               const TransformConfig& policy, Rng& rng);

enum class ReportFormat { kCsv, kJson };
ReportFormat report_format_for(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);
void to_json(nlohmann::json& j, const TransferMatrix& m);
void from_json(const nlohmann::json& j, TransferMatrix& m);

// CSV: header `trained_on,tested_on,clean_acc,patched_acc,n`, accuracies as
// fractions with four decimals, matrices flattened row-major, blanks for
// missing values. JSON stores doubles exactly, so it round-trips.
std::string report_csv(const EvalReport& r);
std::string report_csv(const TransferMatrix& m);
void write_report(const EvalReport& r, ReportFormat format,
                  const std::filesystem::path& path);
void write_report(const TransferMatrix& m, ReportFormat format,
                  const std::filesystem::path& path);
EvalReport read_eval_report(const std::filesystem::path& path);
TransferMatrix read_transfer_matrix(const std::filesystem::path& path);

// "98.07%"
std::string format_percent(double fraction);

// Writes up to n patched examples as PNG for visual inspection.
void dump_patched_examples(const std::filesystem::path& dir,
                           const LabeledDataset& d, const Patch& patch,
                           const TransformConfig& policy, Rng& rng,
                           std::size_t n);

}  // namespace bbpatch
