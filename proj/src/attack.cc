#include "bbpatch/attack.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "bbpatch/evaluation.h"
#include "bbpatch/version.h"

namespace bbpatch {

using nlohmann::json;

std::string_view to_string(AttackMode m) {
  return m == AttackMode::kTargeted ? "targeted" : "untargeted";
}

std::string_view to_string(StopCriterion s) {
  switch (s) {
    case StopCriterion::kBudget:
      return "budget";
    case StopCriterion::kAccuracyBelow:
      return "accuracy-below";
    case StopCriterion::kLossBelow:
      return "loss-below";
  }
  return "budget";
}

std::string_view to_string(PatchInit p) {
  switch (p) {
    case PatchInit::kRandomUniform:
      return "random-uniform";
    case PatchInit::kGray:
      return "gray";
    case PatchInit::kFromFile:
      return "from-file";
  }
  return "random-uniform";
}

AttackMode attack_mode_from_string(std::string_view s) {
  if (s == "untargeted") return AttackMode::kUntargeted;
  if (s == "targeted") return AttackMode::kTargeted;
  throw ArgumentError("unknown attack mode '" + std::string(s) + "'");
}

StopCriterion stop_criterion_from_string(std::string_view s) {
  if (s == "budget") return StopCriterion::kBudget;
  if (s == "accuracy-below") return StopCriterion::kAccuracyBelow;
  if (s == "loss-below") return StopCriterion::kLossBelow;
  throw ArgumentError("unknown stop criterion '" + std::string(s) + "'");
}

PatchInit patch_init_from_string(std::string_view s) {
  if (s == "random-uniform" || s == "random") return PatchInit::kRandomUniform;
  if (s == "gray") return PatchInit::kGray;
  if (s == "from-file") return PatchInit::kFromFile;
  throw ArgumentError("unknown patch init '" + std::string(s) + "'");
}

void AttackConfig::validate(int num_classes) const {
  if (mode == AttackMode::kTargeted &&
      (target_class < 0 || target_class >= num_classes))
    throw ArgumentError("target class " + std::to_string(target_class) +
                        " outside [0, " + std::to_string(num_classes) + ")");
  if (patch_side < 1) throw ArgumentError("patch side must be >= 1");
  if (channels != 1 && channels != 3)
    throw ArgumentError("patch channels must be 1 or 3");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  if (eot_samples < 1) throw ArgumentError("eot samples must be >= 1");
  if (query_budget == 0) throw ArgumentError("query budget must be positive");
  if (stop_check_interval < 1)
    throw ArgumentError("stop check interval must be >= 1");
  if (init == PatchInit::kFromFile && init_path.empty())
    throw ArgumentError("from-file init needs a patch bundle path");
  transform.validate();
  hyper.validate();
}

void to_json(json& j, const AttackConfig& cfg) {
  j = json{{"mode", to_string(cfg.mode)},
           {"target_class", cfg.target_class},
           {"patch_side", cfg.patch_side},
           {"channels", cfg.channels},
           {"mask", to_string(cfg.mask)},
           {"init", to_string(cfg.init)},
           {"init_path", cfg.init_path.string()},
           {"transform", cfg.transform},
           {"batch_size", cfg.batch_size},
           {"eot_samples", cfg.eot_samples},
           {"hyper",
            {{"beta1", cfg.hyper.beta1},
             {"beta2", cfg.hyper.beta2},
             {"mu", cfg.hyper.mu},
             {"learning_rate", cfg.hyper.learning_rate},
             {"directions", cfg.hyper.directions},
             {"decay_learning_rate", cfg.hyper.decay_learning_rate},
             {"epsilon", cfg.hyper.epsilon}}},
           {"query_budget", cfg.query_budget},
           {"max_steps", cfg.max_steps ? json(*cfg.max_steps) : json(nullptr)},
           {"stop", to_string(cfg.stop)},
           {"stop_threshold", cfg.stop_threshold},
           {"stop_check_interval", cfg.stop_check_interval},
           {"seed", cfg.seed},
           {"final_evaluation", cfg.final_evaluation}};
}

void from_json(const json& j, AttackConfig& cfg) {
  cfg = AttackConfig{};
  const AttackConfig defaults;
  cfg.mode = attack_mode_from_string(j.value("mode", std::string("untargeted")));
  cfg.target_class = j.value("target_class", 0);
  cfg.patch_side = j.value("patch_side", defaults.patch_side);
  cfg.channels = j.value("channels", defaults.channels);
  cfg.mask = mask_shape_from_string(j.value("mask", std::string("square")));
  cfg.init = patch_init_from_string(j.value("init", std::string("random-uniform")));
  cfg.init_path = j.value("init_path", std::string());
  if (j.contains("transform")) cfg.transform = j.at("transform").get<TransformConfig>();
  cfg.batch_size = j.value("batch_size", defaults.batch_size);
  cfg.eot_samples = j.value("eot_samples", defaults.eot_samples);
  if (j.contains("hyper")) {
    const auto& h = j.at("hyper");
    cfg.hyper.beta1 = h.value("beta1", defaults.hyper.beta1);
    cfg.hyper.beta2 = h.value("beta2", defaults.hyper.beta2);
    cfg.hyper.mu = h.value("mu", defaults.hyper.mu);
    cfg.hyper.learning_rate = h.value("learning_rate", defaults.hyper.learning_rate);
    cfg.hyper.directions = h.value("directions", defaults.hyper.directions);
    cfg.hyper.decay_learning_rate =
        h.value("decay_learning_rate", defaults.hyper.decay_learning_rate);
    cfg.hyper.epsilon = h.value("epsilon", defaults.hyper.epsilon);
  }
  cfg.query_budget = j.value("query_budget", defaults.query_budget);
  if (j.contains("max_steps") && !j.at("max_steps").is_null())
    cfg.max_steps = j.at("max_steps").get<std::uint64_t>();
  cfg.stop = stop_criterion_from_string(j.value("stop", std::string("budget")));
  cfg.stop_threshold = j.value("stop_threshold", 0.0);
  cfg.stop_check_interval = j.value("stop_check_interval", defaults.stop_check_interval);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.final_evaluation = j.value("final_evaluation", true);
}

std::string config_hash(const AttackConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(json(cfg).dump())));
  return buf;
}

std::vector<EotDraw> sample_eot_draws(std::size_t batch, int eot_samples,
                                      const TransformConfig& transform,
                                      const ImageShape& shape, int patch_side,
                                      Rng& rng) {
  std::vector<EotDraw> draws;
  draws.reserve(batch * static_cast<std::size_t>(eot_samples));
  for (std::size_t i = 0; i < batch; ++i)
    for (int s = 0; s < eot_samples; ++s)
      draws.push_back({i, sample_transform(transform, shape, patch_side, rng)});
  return draws;
}

namespace {

Patch render_probe(const Patch& tmpl, std::span<const double> pixels) {
  if (pixels.size() != tmpl.num_values())
    throw ArgumentError("patch vector has " + std::to_string(pixels.size()) +
                        " values, patch needs " + std::to_string(tmpl.num_values()));
  std::vector<float> clamped(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    // NaN would pass through clamp; let the objective surface it instead.
    const double v = std::isnan(pixels[i]) ? 0.0 : std::clamp(pixels[i], 0.0, 1.0);
    clamped[i] = static_cast<float>(v);
  }
  return tmpl.with_pixels(std::move(clamped));
}

}  // namespace

double eot_loss_with_draws(std::span<const double> patch_pixels,
                           const Patch& patch_template,
                           std::span<const Image> images,
                           std::span<const int> labels,
                           std::span<const EotDraw> draws, Oracle& oracle,
                           AttackMode mode, int target_class) {
  if (images.empty() || draws.empty()) throw ArgumentError("eot_loss: empty batch");
  if (images.size() != labels.size())
    throw ArgumentError("eot_loss: images and labels differ in length");
  for (double v : patch_pixels)
    if (!std::isfinite(v)) throw NumericError("eot_loss: non-finite patch value");
  const Patch patch = render_probe(patch_template, patch_pixels);
  std::vector<Image> patched;
  patched.reserve(draws.size());
  for (const auto& d : draws) {
    if (d.item >= images.size()) throw ArgumentError("eot draw item out of range");
    patched.push_back(apply_patch(images[d.item], patch, d.transform));
  }
  const auto probs = oracle.classify_batch(patched);
  double sum = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    if (mode == AttackMode::kUntargeted) {
      const double p = probs[i][labels[draws[i].item]];
      sum += std::log(std::max(p, kProbabilityFloor));
    } else {
      const double p = probs[i][target_class];
      sum -= std::log(std::max(p, kProbabilityFloor));
    }
  }
  return sum / static_cast<double>(draws.size());
}

double eot_loss(std::span<const double> patch_pixels, const Patch& patch_template,
                std::span<const Image> images, std::span<const int> labels,
                Oracle& oracle, const AttackConfig& cfg, Rng& rng) {
  if (images.empty()) throw ArgumentError("eot_loss: empty batch");
  const auto draws = sample_eot_draws(images.size(), cfg.eot_samples, cfg.transform,
                                      images.front().shape(),
                                      patch_template.side(), rng);
  return eot_loss_with_draws(patch_pixels, patch_template, images, labels, draws,
                             oracle, cfg.mode, cfg.target_class);
}

Patch init_patch(int side, int channels, PatchInit init, Rng& rng,
                 MaskShape mask, const std::filesystem::path& path) {
  if (side < 1) throw ArgumentError("patch side must be >= 1");
  const std::size_t n = static_cast<std::size_t>(side) * side * channels;
  switch (init) {
    case PatchInit::kGray:
      return Patch(side, channels, std::vector<float>(n, 0.5f), make_mask(side, mask));
    case PatchInit::kRandomUniform: {
      std::vector<float> px(n);
      for (float& v : px) v = static_cast<float>(rng.uniform());
      return Patch(side, channels, std::move(px), make_mask(side, mask));
    }
    case PatchInit::kFromFile: {
      Patch p = load_patch_bundle(path).patch;
      if (p.side() != side || p.channels() != channels)
        throw ConsistencyError(path.string() + ": bundle patch is " +
                               std::to_string(p.side()) + "x" +
                               std::to_string(p.side()) + "x" +
                               std::to_string(p.channels()) + ", expected " +
                               std::to_string(side) + "x" + std::to_string(side) +
                               "x" + std::to_string(channels));
      return p;
    }
  }
  throw ArgumentError("unknown patch init");
}

namespace {

// Partial Fisher-Yates: k distinct indices out of n.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::vector<double> to_params(const Patch& p) {
  return std::vector<double>(p.pixels().begin(), p.pixels().end());
}

Patch from_params(const Patch& tmpl, std::span<const double> params) {
  return render_probe(tmpl, params);
}

}  // namespace

AttackResult train_bb_patch(const LabeledDataset& train, Oracle& oracle,
                            const AttackConfig& cfg) {
  cfg.validate(oracle.num_classes());
  if (train.empty()) throw ArgumentError("train_bb_patch: empty training split");
  if (train.shape() != oracle.input_shape())
    throw ArgumentError("dataset shape " + train.shape().to_string() +
                        " does not match oracle input " +
                        oracle.input_shape().to_string());
  if (train.num_classes() != oracle.num_classes())
    throw ArgumentError("dataset and oracle disagree on the number of classes");
  if (cfg.channels != train.shape().channels)
    throw ArgumentError("patch has " + std::to_string(cfg.channels) +
                        " channels, images have " +
                        std::to_string(train.shape().channels));
  if (cfg.transform.min_scale * cfg.patch_side >
      std::min(train.shape().height, train.shape().width))
    throw GeometryError("patch of side " + std::to_string(cfg.patch_side) +
                        " cannot fit inside " + train.shape().to_string() + " images");

  const Rng master(cfg.seed);
  Rng init_rng = master.derive("init");

  AttackResult result;
  result.config = cfg;
  result.provenance = PatchProvenance{oracle.id(), cfg.seed, 0, config_hash(cfg),
                                      kToolVersion};
  result.initial_patch = init_patch(cfg.patch_side, cfg.channels, cfg.init, init_rng,
                                    cfg.mask, cfg.init_path);
  result.patch = result.initial_patch;

  const std::size_t batch =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), train.size());
  const std::uint64_t per_eval = batch * static_cast<std::uint64_t>(cfg.eot_samples);
  const std::uint64_t per_step =
      per_eval * (static_cast<std::uint64_t>(cfg.hyper.directions) + 1);
  const std::uint64_t start_queries = oracle.queries();
  auto used = [&] { return oracle.queries() - start_queries; };

  auto finish = [&](AttackResult& r) {
    r.queries_used = used();
    r.provenance.queries = r.queries_used;
    if (cfg.final_evaluation) {
      const std::uint64_t before = oracle.queries();
      Rng eval_rng = master.derive("final-eval");
      const EvalReport rep = evaluate(oracle, train, &r.patch, cfg.transform, eval_rng);
      r.clean_accuracy = rep.clean_accuracy;
      r.final_accuracy = rep.patched_accuracy;
      r.final_eval_queries = oracle.queries() - before;
    }
  };

  if (cfg.max_steps && *cfg.max_steps == 0) {
    result.stop_reason = "max-steps";
    finish(result);
    return result;
  }
  if (cfg.query_budget < per_step)
    throw ArgumentError("query budget " + std::to_string(cfg.query_budget) +
                        " is smaller than one step (" + std::to_string(per_step) +
                        " queries)");

  // Current step's minibatch and transforms; every evaluation within a step
  // reuses them.
  std::vector<Image> step_images;
  std::vector<int> step_labels;
  std::vector<EotDraw> step_draws;

  const Patch tmpl = result.initial_patch;
  const Objective objective = [&](std::span<const double> params) {
    return eot_loss_with_draws(params, tmpl, step_images, step_labels, step_draws,
                               oracle, cfg.mode, cfg.target_class);
  };

  ZoRunCallbacks callbacks;
  callbacks.begin_step = [&](std::uint64_t t) {
    Rng step_rng = master.derive("step", t);
    const auto idx = sample_without_replacement(train.size(), batch, step_rng);
    step_images.clear();
    step_labels.clear();
    for (std::size_t i : idx) {
      step_images.push_back(train.image(i));
      step_labels.push_back(train.label(i));
    }
    step_draws = sample_eot_draws(batch, cfg.eot_samples, cfg.transform,
                                  train.shape(), cfg.patch_side, step_rng);
  };
  callbacks.after_step = [&](const StepRecord& rec, const OptimizerState& state) {
    result.patch = from_params(tmpl, state.params);
    result.history.push_back({rec.step, used(), rec.objective, rec.best_objective});
    if (cfg.max_steps && rec.step >= *cfg.max_steps) {
      result.stop_reason = "max-steps";
      return false;
    }
    if (cfg.stop == StopCriterion::kLossBelow && rec.objective < cfg.stop_threshold) {
      result.stop_reason = "loss-below";
      return false;
    }
    if (cfg.stop == StopCriterion::kAccuracyBelow &&
        rec.step % static_cast<std::uint64_t>(cfg.stop_check_interval) == 0 &&
        used() + train.size() <= cfg.query_budget) {
      Rng check_rng = master.derive("stop-check", rec.step);
      const double acc =
          patched_accuracy(oracle, train, result.patch, cfg.transform, check_rng);
      result.history.back().evaluations = used();
      if (acc < cfg.stop_threshold) {
        result.stop_reason = "accuracy-below";
        return false;
      }
    }
    if (used() + per_step > cfg.query_budget) {
      result.stop_reason = "budget";
      return false;
    }
    return true;
  };

  Rng direction_rng = master.derive("directions");
  const BoxConstraint box = BoxConstraint::uniform(tmpl.num_values(), 0.0, 1.0);
  try {
    const auto run = run_zo_adamm(objective, to_params(result.initial_patch),
                                  cfg.hyper, box, cfg.query_budget / per_eval,
                                  direction_rng, callbacks,
                                  std::max(1, oracle.max_in_flight()));
    result.patch = from_params(tmpl, run.state.params);
    if (result.stop_reason.empty()) result.stop_reason = "budget";
  } catch (const Error& e) {
    result.queries_used = used();
    result.provenance.queries = result.queries_used;
    result.stop_reason = "aborted";
    throw AttackAborted(std::string("attack aborted after ") +
                            std::to_string(result.history.size()) + " steps: " +
                            e.what(),
                        std::move(result));
  }
  finish(result);
  return result;
}

json attack_summary_json(const AttackResult& r) {
  json j{{"config", r.config},
         {"provenance",
          {{"oracle_id", r.provenance.oracle_id},
           {"seed", r.provenance.seed},
           {"config_hash", r.provenance.config_hash},
           {"tool_version", r.provenance.tool_version}}},
         {"steps", r.history.size()},
         {"queries_used", r.queries_used},
         {"stop_reason", r.stop_reason},
         {"final_eval_queries", r.final_eval_queries}};
  j["clean_accuracy"] = r.clean_accuracy ? json(*r.clean_accuracy) : json(nullptr);
  j["final_accuracy"] = r.final_accuracy ? json(*r.final_accuracy) : json(nullptr);
  j["final_objective"] = r.history.empty() ? json(nullptr) : json(r.history.back().objective);
  return j;
}

void write_attack_outputs(const std::filesystem::path& dir, const AttackResult& r) {
  save_patch_bundle(dir, PatchBundle{r.patch, r.config.transform, r.provenance});
  write_history_csv(dir / "history.csv", r.history);
  const auto path = dir / "attack.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << attack_summary_json(r).dump(2) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace bbpatch
