// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>

#include "bbpatch/attack.h"
#include "bbpatch/builtin_model.h"
#include "bbpatch/evaluation.h"
#include "bbpatch/geometry.h"
#include "bbpatch/zo_optim.h"
#include "test_support.h"

using namespace bbpatch;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome estimator() {
  const auto t0 = Clock::now();
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng xr = Rng(seed).derive("x");
    std::vector<double> x(20);
    for (double& v : x) v = xr.uniform(-1, 1);
    Rng rng = Rng(seed).derive("directions");
    const auto est = zo_gradient_estimate(
        [](std::span<const double> p) { return std::inner_product(p.begin(), p.end(), p.begin(), 0.0); }, x,
        1e-3, 10000, rng);
    double err = 0, ref = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      err += std::pow(est.gradient[i] - 2 * x[i], 2);
      ref += std::pow(2 * x[i], 2);
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  const double secs = seconds_since(t0);
  return {worst <= 0.1 && secs < 5.0,
          fmt("worst relative error %.4f over 5 seeds (<= 0.1), %.2f s (< 5 s)", worst, secs)};
}

Outcome reductions() {
  const BoxConstraint box = BoxConstraint::uniform(5, -10, 10);
  const std::vector<double> g{0.7, -3.0, 0.0, 1e-2, -2e-3};
  const std::vector<double> p0(5, 0.0);

  ZoHyperParams sign;
  sign.beta1 = sign.beta2 = 0;
  sign.learning_rate = 0.1;
  const auto s = adamm_step(OptimizerState::fresh(p0), g, sign, box);
  double sign_err = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double expected = g[i] == 0 ? 0.0 : -0.1 * (g[i] > 0 ? 1 : -1);
    // |g| / sqrt(g^2 + eps) = 1 up to the eps guard
    const double guard = g[i] == 0 ? 0.0 : 0.1 * (1 - std::abs(g[i]) / std::sqrt(g[i] * g[i] + 1e-8));
    sign_err = std::max(sign_err, std::abs(s.params[i] - expected) - guard);
  }

  ZoHyperParams sgd;
  sgd.beta1 = 0;
  sgd.beta2 = 1;
  sgd.learning_rate = 0.1;
  const auto z = adamm_step(OptimizerState::fresh(p0, 1.0), g, sgd, box);
  const double k = z.params[0] / -g[0];
  double prop_err = 0;
  for (std::size_t i = 0; i < g.size(); ++i) prop_err = std::max(prop_err, std::abs(z.params[i] + k * g[i]));
  return {sign_err <= 1e-15 && k > 0 && prop_err <= 1e-15,
          fmt("sign step deviation %.1e beyond eps guard; -g proportionality residual %.1e (k = %.6f)", sign_err,
              prop_err, k)};
}

Outcome projection() {
  Rng rng(17);
  const std::size_t d = 4;
  const BoxConstraint box = BoxConstraint::uniform(d, 0, 1);
  const double res = 1e-2;
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(d), w(d);
    for (std::size_t i = 0; i < d; ++i) {
      p[i] = rng.uniform(-0.5, 1.5);
      w[i] = rng.uniform(0, 9);
    }
    std::vector<double> sqrt_w(d);
    for (std::size_t i = 0; i < d; ++i) sqrt_w[i] = std::sqrt(w[i]);
    const auto y = project_weighted_box(p, sqrt_w, box);
    // Grid search on the full weighted objective, coordinate by coordinate.
    for (std::size_t i = 0; i < d; ++i) {
      double best = 0, best_cost = INFINITY;
      for (int k = 0; k <= 100; ++k) {
        const double c = k * res;
        const double cost = sqrt_w[i] * (c - p[i]) * (c - p[i]);
        if (cost < best_cost) {
          best_cost = cost;
          best = c;
        }
      }
      if (std::abs(y[i] - best) > res) ++mismatches;
    }
  }
  Rng grng(18);
  ZoHyperParams hp;
  hp.beta2 = 0.3;
  OptimizerState s = OptimizerState::fresh(std::vector<double>(d, 0.5));
  int decreases = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> g(d);
    for (double& x : g) x = grng.normal() * (t % 97 == 0 ? 50 : 0.01);
    const auto next = adamm_step(s, g, hp, box);
    for (std::size_t i = 0; i < d; ++i)
      if (next.v_hat[i] < s.v_hat[i]) ++decreases;
    s = next;
  }
  return {mismatches == 0 && decreases == 0,
          fmt("%d grid mismatches in 1000 pairs; %d v_hat decreases in 10^4 steps", mismatches, decreases)};
}

Outcome patch_operator() {
  Rng rng(19);
  const ImageShape shape{28, 28, 1};
  std::vector<float> px(shape.size());
  for (float& v : px) v = static_cast<float>(rng.uniform());
  const Image x(shape, px);
  bool zeros_ok = true;
  const Patch blank(5, 1, std::vector<float>(25, 1.0f), std::vector<std::uint8_t>(25, 0));
  for (const auto& t : {aligned_transform(5, 3, 3), AffineTransform{0.4, 1.2, 14.3, 9.1}})
    zeros_ok = zeros_ok && apply_patch(x, blank, t) == x;

  std::vector<float> z(shape.size());
  for (float& v : z) v = static_cast<float>(rng.uniform());
  const Image full = apply_patch(x, Patch(28, 1, z), aligned_transform(28, 0, 0));
  const bool ones_ok = std::equal(full.pixels().begin(), full.pixels().end(), z.begin());

  const WarpedPatch w = warp_patch(Patch(2, 1, {0.1f, 0.2f, 0.3f, 0.4f}),
                                   AffineTransform{std::numbers::pi / 2, 1.0, 1.0, 1.0}, ImageShape{2, 2, 1});
  const float want[] = {0.3f, 0.1f, 0.4f, 0.2f};
  bool turn_ok = true;
  for (int i = 0; i < 4; ++i) turn_ok = turn_ok && std::abs(w.pixels[i] - want[i]) <= 1e-6f;

  int out_of_range = 0;
  const TransformConfig cfg{std::numbers::pi, 0.5, 1.5, LocationPolicy::kAnywhere, 0, 0};
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<float> pp(25);
    for (float& v : pp) v = static_cast<float>(rng.uniform());
    const Patch p(5, 1, pp, make_mask(5, trial % 2 ? MaskShape::kSquare : MaskShape::kCircle));
    const Image out = apply_patch(x, p, sample_transform(cfg, shape, 5, rng));
    for (float v : out.pixels())
      if (!(v >= 0.0f && v <= 1.0f)) ++out_of_range;
  }
  return {zeros_ok && ones_ok && turn_ok && out_of_range == 0,
          fmt("zero mask %s, full overwrite %s, quarter turn %s, %d out-of-range pixels in 10^4 cases",
              zeros_ok ? "ok" : "BAD", ones_ok ? "ok" : "BAD", turn_ok ? "ok" : "BAD", out_of_range)};
}

// MNIST 0-vs-1: oracles trained on the full pool, patch-train split of 2000.
struct Task {
  LabeledDataset all = bbpatch::testing::mnist_zero_one();
  LabeledDataset train{all.shape(), 2};
  LabeledDataset eval{all.shape(), 2};
  std::shared_ptr<BuiltinModel> mlp, linear;

  Task() {
    Rng split(0);
    std::tie(train, eval) = split_dataset(all, 2000, split);
    Rng a(1), b(2);
    mlp = std::make_shared<BuiltinModel>(train_builtin(all, {ModelKind::kMlp, {64}}, TrainOptions{}, a));
    linear = std::make_shared<BuiltinModel>(
        train_builtin(all, {ModelKind::kSoftmaxLinear, {}}, TrainOptions{}, b));
  }
};

Task& task() {
  static Task t;
  return t;
}

AttackConfig desk_config(std::uint64_t seed) {
  AttackConfig cfg;  // 5x5 square, untargeted, 2e5 queries
  cfg.seed = seed;
  return cfg;
}

Outcome end_to_end() {
  Task& t = task();
  BuiltinOracle oracle("builtin:mlp", t.mlp);
  const auto t0 = Clock::now();
  const AttackResult r = train_bb_patch(t.train, oracle, desk_config(7));
  const double secs = seconds_since(t0);
  const double clean = *r.clean_accuracy, patched = *r.final_accuracy;
  return {clean >= 0.95 && patched <= 0.60 && r.queries_used <= 200000 && secs < 600,
          fmt("patch-train split: clean %.4f (>= 0.95), patched %.4f (<= 0.60), %llu queries, %zu steps, %.1f s",
              clean, patched, static_cast<unsigned long long>(r.queries_used), r.history.size(), secs)};
}

Outcome transfer() {
  Task& t = task();
  BuiltinOracle source("builtin:linear", t.linear);
  BuiltinOracle target("builtin:mlp", t.mlp);
  AttackConfig cfg = desk_config(8);
  cfg.final_evaluation = false;
  const AttackResult r = train_bb_patch(t.train, source, cfg);
  Rng rng = Rng(8).derive("transfer-eval");
  const EvalReport rep = evaluate(target, t.eval, &r.patch, cfg.transform, rng);
  const double drop = rep.clean_accuracy - *rep.patched_accuracy;
  return {drop >= 0.10, fmt("linear-trained patch on mlp, eval split (n=%llu): clean %.4f, patched %.4f, drop "
                            "%.1f pp (>= 10)",
                            static_cast<unsigned long long>(rep.n), rep.clean_accuracy, *rep.patched_accuracy,
                            100 * drop)};
}

Outcome determinism() {
  Task& t = task();
  bbpatch::testing::TempDir dir("acceptance");
  AttackConfig cfg = desk_config(9);
  cfg.query_budget = 20000;
  for (const char* run : {"a", "b"}) {
    BuiltinOracle oracle("builtin:mlp", t.mlp);
    write_attack_outputs(dir / run, train_bb_patch(t.train, oracle, cfg));
  }
  int differing = 0, files = 0;
  for (const char* name : {"patch.png", "mask.png", "meta.json", "history.csv", "attack.json"}) {
    ++files;
    if (bbpatch::testing::read_file(dir / "a" / name) != bbpatch::testing::read_file(dir / "b" / name))
      ++differing;
  }
  return {differing == 0, fmt("%d of %d bundle/history files differ between two seeded runs", differing, files)};
}

}  // namespace

int main() {
  report("estimator", estimator);
  report("optimizer-reductions", reductions);
  report("projection", projection);
  report("patch-operator", patch_operator);
  report("end-to-end-mlp", end_to_end);
  report("transfer-linear-to-mlp", transfer);
  report("determinism", determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
