#include "bbpatch/zo_optim.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>

#include "bbpatch/errors.h"

namespace bbpatch {

void ZoHyperParams::validate() const {
  if (!(beta1 >= 0.0 && beta1 <= 1.0)) throw ArgumentError("beta1 must lie in [0, 1]");
  if (!(beta2 >= 0.0 && beta2 <= 1.0)) throw ArgumentError("beta2 must lie in [0, 1]");
  if (!(mu > 0.0)) throw ArgumentError("mu must be positive");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (directions < 1) throw ArgumentError("directions (q) must be >= 1");
  if (!(epsilon >= 0.0)) throw ArgumentError("epsilon must be >= 0");
}

double ZoHyperParams::step_size(std::uint64_t t) const {
  if (!decay_learning_rate || t == 0) return learning_rate;
  return learning_rate / std::sqrt(static_cast<double>(t));
}

BoxConstraint BoxConstraint::uniform(std::size_t dim, double lo, double hi) {
  BoxConstraint b{std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  b.validate();
  return b;
}

void BoxConstraint::validate() const {
  if (lo.size() != hi.size()) throw ArgumentError("box bounds differ in length");
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] <= hi[i])) throw ArgumentError("box needs lo <= hi");
}

bool BoxConstraint::contains(std::span<const double> p) const {
  if (p.size() != lo.size()) return false;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!(p[i] >= lo[i] && p[i] <= hi[i])) return false;
  return true;
}

OptimizerState OptimizerState::fresh(std::vector<double> params,
                                     double initial_second_moment) {
  if (!(initial_second_moment >= 0.0))
    throw ArgumentError("initial second moment must be >= 0");
  OptimizerState s;
  const std::size_t d = params.size();
  s.params = std::move(params);
  s.m.assign(d, 0.0);
  s.v.assign(d, initial_second_moment);
  s.v_hat.assign(d, initial_second_moment);
  return s;
}

void OptimizerState::check_invariants() const {
  const std::size_t d = params.size();
  if (m.size() != d || v.size() != d || v_hat.size() != d)
    throw ArgumentError("optimizer state vectors differ in length");
  for (std::size_t i = 0; i < d; ++i) {
    if (!(v[i] >= 0.0)) throw ArgumentError("second moment must be >= 0");
    if (!(v_hat[i] >= v[i])) throw ArgumentError("v_hat must dominate v");
  }
}

GradientEstimate zo_gradient_estimate(const Objective& objective,
                                      std::span<const double> params, double mu,
                                      int directions, Rng& rng,
                                      std::optional<double> cached_base,
                                      int parallelism) {
  if (!(mu > 0.0)) throw ArgumentError("mu must be positive");
  if (directions < 1) throw ArgumentError("directions (q) must be >= 1");
  const std::size_t d = params.size();
  const std::size_t q = static_cast<std::size_t>(directions);

  GradientEstimate est;
  est.gradient.assign(d, 0.0);
  if (cached_base) {
    est.base_value = *cached_base;
  } else {
    est.base_value = objective(params);
    ++est.evaluations;
  }
  if (!std::isfinite(est.base_value))
    throw NumericError("objective is not finite at the base point (probe 0)");

  std::vector<std::vector<double>> dirs(q, std::vector<double>(d));
  for (auto& u : dirs) {
    // Normalized Gaussian draws are uniform on the unit sphere, where
    // E[u u^T] = I / d makes the d / mu factor unbiased.
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : u) {
        x = rng.normal();
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : u) x /= norm;
  }

  std::vector<double> values(q);
  auto probe = [&](std::size_t i) {
    std::vector<double> point(d);
    for (std::size_t k = 0; k < d; ++k) point[k] = params[k] + mu * dirs[i][k];
    values[i] = objective(point);
  };
  const std::size_t workers = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(parallelism, 1)), 1, q);
  if (workers == 1) {
    for (std::size_t i = 0; i < q; ++i) probe(i);
  } else {
    std::vector<std::future<void>> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < q; i += workers) probe(i);
      }));
    for (auto& f : pool) f.get();
  }
  est.evaluations += q;

  const double scale = static_cast<double>(d) / mu;
  for (std::size_t i = 0; i < q; ++i) {
    if (!std::isfinite(values[i]))
      throw NumericError("objective is not finite at probe " + std::to_string(i + 1));
    const double coeff = scale * (values[i] - est.base_value);
    for (std::size_t k = 0; k < d; ++k) est.gradient[k] += coeff * dirs[i][k];
  }
  for (double& g : est.gradient) g /= static_cast<double>(q);
  return est;
}

std::vector<double> project_weighted_box(std::span<const double> params,
                                         std::span<const double> weights,
                                         const BoxConstraint& box) {
  if (params.size() != box.dim() || weights.size() != box.dim())
    throw ArgumentError("projection: dimension mismatch");
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ArgumentError("projection weights must be >= 0");
    out[i] = std::clamp(params[i], box.lo[i], box.hi[i]);
  }
  return out;
}

OptimizerState adamm_step(const OptimizerState& s, std::span<const double> g,
                          const ZoHyperParams& hp, const BoxConstraint& box) {
  const std::size_t d = s.dim();
  if (g.size() != d || box.dim() != d)
    throw ArgumentError("adamm_step: dimension mismatch");
  OptimizerState next = s;
  next.step = s.step + 1;
  const double alpha = hp.step_size(next.step);
  std::vector<double> moved(d);
  std::vector<double> weights(d);
  for (std::size_t i = 0; i < d; ++i) {
    next.m[i] = hp.beta1 * s.m[i] + (1.0 - hp.beta1) * g[i];
    next.v[i] = hp.beta2 * s.v[i] + (1.0 - hp.beta2) * g[i] * g[i];
    next.v_hat[i] = std::max(s.v_hat[i], next.v[i]);
    moved[i] = s.params[i] - alpha * next.m[i] / std::sqrt(next.v_hat[i] + hp.epsilon);
    weights[i] = std::sqrt(next.v_hat[i]);
  }
  next.params = project_weighted_box(moved, weights, box);
  return next;
}

ZoRunResult run_zo_adamm(const Objective& objective, std::vector<double> p0,
                         const ZoHyperParams& hp, const BoxConstraint& box,
                         std::uint64_t budget, Rng& rng,
                         const ZoRunCallbacks& callbacks, int parallelism) {
  hp.validate();
  box.validate();
  if (box.dim() != p0.size()) throw ArgumentError("box and P0 differ in dimension");
  ZoRunResult result{OptimizerState::fresh(std::move(p0)), {}};
  const std::uint64_t per_step = static_cast<std::uint64_t>(hp.directions) + 1;
  std::uint64_t used = 0;
  double best = 0.0;
  while (used + per_step <= budget) {
    const std::uint64_t t = result.state.step + 1;
    if (callbacks.begin_step) callbacks.begin_step(t);
    GradientEstimate est;
    try {
      est = zo_gradient_estimate(objective, result.state.params, hp.mu,
                                 hp.directions, rng, std::nullopt, parallelism);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(t) + ": " + e.what());
    }
    used += est.evaluations;
    best = result.history.empty() ? est.base_value : std::min(best, est.base_value);
    result.state = adamm_step(result.state, est.gradient, hp, box);
    const StepRecord rec{t, used, est.base_value, best};
    result.history.push_back(rec);
    if (callbacks.after_step && !callbacks.after_step(rec, result.state)) break;
  }
  return result;
}

std::string history_csv(std::span<const StepRecord> history) {
  std::string out = "step,queries,objective,best_objective\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%llu,%llu,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.step),
                  static_cast<unsigned long long>(r.evaluations), r.objective,
                  r.best_objective);
    out += line;
  }
  return out;
}

void write_history_csv(const std::filesystem::path& path,
                       std::span<const StepRecord> history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << history_csv(history);
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace bbpatch
