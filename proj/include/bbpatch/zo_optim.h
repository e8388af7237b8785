#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bbpatch/rng.h"

namespace bbpatch {

// Scalar objective on a flat parameter vector. Only values are ever
// requested; nothing here asks for derivatives.
using Objective = std::function<double(std::span<const double>)>;

struct ZoHyperParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double mu = 0.01;             // smoothing radius of the probes
  double learning_rate = 0.05;  // alpha
  int directions = 10;          // q Gaussian directions per estimate
  bool decay_learning_rate = false;  // alpha_t = alpha / sqrt(t) when set
  double epsilon = 1e-8;        // inside sqrt(v_hat + eps)

  // Throws ArgumentError unless beta1, beta2 in [0, 1], mu > 0, alpha > 0,
  // q >= 1 and eps >= 0.
  void validate() const;
  double step_size(std::uint64_t t) const;  // t is 1-based
};

struct BoxConstraint {
  std::vector<double> lo;
  std::vector<double> hi;

  static BoxConstraint uniform(std::size_t dim, double lo, double hi);
  std::size_t dim() const { return lo.size(); }
  void validate() const;
  bool contains(std::span<const double> p) const;
};

struct OptimizerState {
  std::vector<double> params;  // P_t
  std::vector<double> m;       // first moment
  std::vector<double> v;       // second moment
  std::vector<double> v_hat;   // running max of v
  std::uint64_t step = 0;

  // m = 0; v = v_hat = initial_second_moment.
  static OptimizerState fresh(std::vector<double> params,
                              double initial_second_moment = 0.0);
  std::size_t dim() const { return params.size(); }
  // Throws ArgumentError if lengths differ, v < 0 or v_hat < v somewhere.
  void check_invariants() const;
};

struct GradientEstimate {
  std::vector<double> gradient;
  double base_value = 0.0;
  std::uint64_t evaluations = 0;
};

// Two-point estimate
//   (1/q) sum_i (d/mu) [f(P + mu u_i) - f(P)] u_i,
// u_i a standard Gaussian draw scaled to unit length.
// All q directions are drawn before any probe is evaluated, so running the
// probes on `parallelism` threads does not change the result. f(P) is
// evaluated once unless `cached_base` supplies it. Throws NumericError naming
// the probe (0 = base, i = direction i) when a value is not finite.
GradientEstimate zo_gradient_estimate(const Objective& objective,
                                      std::span<const double> params, double mu,
                                      int directions, Rng& rng,
                                      std::optional<double> cached_base = std::nullopt,
                                      int parallelism = 1);

// Weighted projection onto the box: argmin_y sum_i w_i (y_i - p_i)^2 over
// lo <= y <= hi. With diagonal non-negative weights the problem separates per
// coordinate and the clamp solves every one-dimensional piece, whatever w_i.
std::vector<double> project_weighted_box(std::span<const double> params,
                                         std::span<const double> weights,
                                         const BoxConstraint& box);

// One AdaMM update:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  v_hat <- max(v_hat, v)
//   P <- project(P - alpha_t m / sqrt(v_hat + eps), weights sqrt(v_hat))
OptimizerState adamm_step(const OptimizerState& s, std::span<const double> g,
                          const ZoHyperParams& hp, const BoxConstraint& box);

struct StepRecord {
  std::uint64_t step = 0;         // 1-based
  std::uint64_t evaluations = 0;  // cumulative objective evaluations
  double objective = 0.0;         // f(P_t) before the update
  double best_objective = 0.0;
};

struct ZoRunCallbacks {
  // Called before each step's estimate; stochastic objectives resample here
  // so the base value and every probe of one step see the same draw.
  std::function<void(std::uint64_t step)> begin_step;
  // Called after each step; returning false stops the run.
  std::function<bool(const StepRecord&, const OptimizerState&)> after_step;
};

struct ZoRunResult {
  OptimizerState state;
  std::vector<StepRecord> history;
};

// Repeats estimate + step while another (q + 1)-evaluation step fits in
// `budget`. A budget below q + 1 returns P0 with an empty history. NumericError
// from the objective is rethrown with the step index.
ZoRunResult run_zo_adamm(const Objective& objective, std::vector<double> p0,
                         const ZoHyperParams& hp, const BoxConstraint& box,
                         std::uint64_t budget, Rng& rng,
                         const ZoRunCallbacks& callbacks = {},
                         int parallelism = 1);

// CSV with header `step,queries,objective,best_objective`.
void write_history_csv(const std::filesystem::path& path,
                       std::span<const StepRecord> history);
std::string history_csv(std::span<const StepRecord> history);

}  // namespace bbpatch
