#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "bbpatch/dataset.h"
#include "bbpatch/errors.h"
#include "bbpatch/geometry.h"
#include "bbpatch/oracle.h"
#include "bbpatch/patch_bundle.h"
#include "bbpatch/zo_optim.h"

namespace bbpatch {

enum class AttackMode { kUntargeted, kTargeted };
enum class StopCriterion { kBudget, kAccuracyBelow, kLossBelow };
enum class PatchInit { kRandomUniform, kGray, kFromFile };

std::string_view to_string(AttackMode m);
std::string_view to_string(StopCriterion s);
std::string_view to_string(PatchInit p);
AttackMode attack_mode_from_string(std::string_view s);
StopCriterion stop_criterion_from_string(std::string_view s);
PatchInit patch_init_from_string(std::string_view s);

// p(class) below this is treated as this when taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

struct AttackConfig {
  AttackMode mode = AttackMode::kUntargeted;
  int target_class = 0;  // targeted mode only

  int patch_side = 5;
  int channels = 1;
  MaskShape mask = MaskShape::kSquare;
  PatchInit init = PatchInit::kRandomUniform;
  std::filesystem::path init_path;  // PatchInit::kFromFile

  TransformConfig transform{0.2617993877991494, 0.9, 1.1,
                            LocationPolicy::kAnywhere, 0.0, 0.0};
  int batch_size = 16;   // images per loss evaluation
  int eot_samples = 4;   // transform draws per image
  ZoHyperParams hyper;

  std::uint64_t query_budget = 200000;  // oracle image-queries
  std::optional<std::uint64_t> max_steps;
  StopCriterion stop = StopCriterion::kBudget;
  double stop_threshold = 0.0;
  int stop_check_interval = 50;  // steps between accuracy checks

  std::uint64_t seed = 0;
  // Measure patched accuracy on the training split after the run. These
  // queries are reported separately and are not part of the attack budget.
  bool final_evaluation = true;

  // Throws ArgumentError.
  void validate(int num_classes) const;
};

void to_json(nlohmann::json& j, const AttackConfig& cfg);
void from_json(const nlohmann::json& j, AttackConfig& cfg);
// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const AttackConfig& cfg);

// One (image, transform) pair of an EOT evaluation.
struct EotDraw {
  std::size_t item = 0;
  AffineTransform transform;
};

// eot_samples draws per image, image-major.
std::vector<EotDraw> sample_eot_draws(std::size_t batch, int eot_samples,
                                      const TransformConfig& transform,
                                      const ImageShape& shape, int patch_side,
                                      Rng& rng);

// Mean over draws of log p(label | patched) (untargeted) or of
// -log p(target | patched) (targeted); minimizing either is the attack.
// Probe points may leave [0, 1]; they are clamped for rendering only.
// Issues exactly draws.size() oracle queries in one classify_batch call.
double eot_loss_with_draws(std::span<const double> patch_pixels,
                           const Patch& patch_template,
                           std::span<const Image> images,
                           std::span<const int> labels,
                           std::span<const EotDraw> draws, Oracle& oracle,
                           AttackMode mode, int target_class);

// Draws batch x eot_samples transforms from `rng`, then evaluates.
double eot_loss(std::span<const double> patch_pixels, const Patch& patch_template,
                std::span<const Image> images, std::span<const int> labels,
                Oracle& oracle, const AttackConfig& cfg, Rng& rng);

Patch init_patch(int side, int channels, PatchInit init, Rng& rng,
                 MaskShape mask = MaskShape::kSquare,
                 const std::filesystem::path& path = {});

struct AttackResult {
  Patch initial_patch;
  Patch patch;
  std::vector<StepRecord> history;  // evaluations = cumulative oracle image-queries
  std::uint64_t queries_used = 0;
  std::optional<double> clean_accuracy;  // on the training split
  std::optional<double> final_accuracy;  // patched, on the training split
  std::uint64_t final_eval_queries = 0;
  std::string stop_reason;
  AttackConfig config;
  PatchProvenance provenance;
};

// Thrown when the oracle fails mid-run; carries everything done so far.
class AttackAborted : public Error {
 public:
  AttackAborted(const std::string& what, AttackResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const AttackResult& partial() const { return partial_; }

 private:
  AttackResult partial_;
};

// Optimizes the patch pixels with ZO-AdaMM on the EOT loss. Every step draws
// a fresh minibatch and fresh transforms from its own sub-stream; the base
// value and all probes of a step share them. Deterministic given the seed
// and a deterministic oracle.
AttackResult train_bb_patch(const LabeledDataset& train, Oracle& oracle,
                            const AttackConfig& cfg);

// patch bundle + history.csv + attack.json
void write_attack_outputs(const std::filesystem::path& dir,
                          const AttackResult& result);
nlohmann::json attack_summary_json(const AttackResult& result);

}  // namespace bbpatch
