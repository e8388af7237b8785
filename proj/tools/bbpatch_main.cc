// bbpatch: train desk-scale oracles, run black-box patch attacks, evaluate
// and apply patches.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bbpatch/attack.h"
#include "bbpatch/builtin_model.h"
#include "bbpatch/dataset.h"
#include "bbpatch/evaluation.h"
#include "bbpatch/png_io.h"
#include "bbpatch/remote_oracle.h"
#include "bbpatch/version.h"
#include "json_config.h"

namespace fs = std::filesystem;
using namespace bbpatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct DataOptions {
  std::string idx_dir;
  std::string manifest;
  std::string image_root;
  std::vector<int> classes;
  std::size_t limit = 0;  // 0 = all
  std::size_t split_size = 2000;
  std::uint64_t split_seed = 0;
  std::string on;
};

void add_data_options(CLI::App* cmd, DataOptions& o, const std::string& default_on) {
  o.on = default_on;
  auto* group = cmd->add_option_group("data");
  auto* idx = group->add_option("--data", o.idx_dir, "Directory holding IDX image/label files")
                  ->check(CLI::ExistingDirectory);
  auto* man = group->add_option("--manifest", o.manifest, "Image manifest (#shape H W C, path<TAB>label)")
                  ->check(CLI::ExistingFile);
  idx->excludes(man);
  group->require_option(1);
  cmd->add_option("--image-root", o.image_root, "Root for manifest paths (default: manifest directory)");
  cmd->add_option("--classes", o.classes, "Keep these classes, relabelled 0..k-1 in order")
      ->delimiter(',');
  cmd->add_option("--limit", o.limit, "Read at most this many images (0 = all)");
  cmd->add_option("--split-size", o.split_size, "Images in the patch-train split")
      ->capture_default_str();
  cmd->add_option("--split-seed", o.split_seed, "Seed of the patch-train/eval split")
      ->capture_default_str();
  cmd->add_option("--on", o.on, "Dataset part: full, train-patch or eval")
      ->check(CLI::IsMember({"full", "train-patch", "eval"}))
      ->capture_default_str();
}

LabeledDataset load_data(const DataOptions& o) {
  std::optional<std::size_t> limit;
  if (o.limit > 0) limit = o.limit;
  LabeledDataset d = [&] {
    if (!o.idx_dir.empty()) return load_idx_directory(o.idx_dir, limit);
    const fs::path manifest(o.manifest);
    const fs::path root = o.image_root.empty() ? manifest.parent_path() : fs::path(o.image_root);
    LabeledDataset all = load_image_dir_dataset(root, manifest);
    if (!limit || *limit >= all.size()) return all;
    std::vector<std::size_t> idx(*limit);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return all.subset(idx, SplitTag::kFull);
  }();
  if (!o.classes.empty()) d = select_classes(d, o.classes);
  if (o.on == "full") return d;
  if (o.split_size > d.size())
    throw ConfigurationError("--split-size " + std::to_string(o.split_size) +
                             " exceeds the dataset size " + std::to_string(d.size()));
  Rng split_rng(o.split_seed);
  auto [patch_train, eval] = split_dataset(d, o.split_size, split_rng);
  return o.on == "eval" ? eval : patch_train;
}

struct OracleOptions {
  std::vector<std::string> builtin;
  std::vector<std::string> cmd;
  std::vector<std::string> http;
  int max_in_flight = 1;
  int timeout_ms = 30000;
};

void add_oracle_options(CLI::App* cmd, OracleOptions& o, bool many) {
  auto* group = cmd->add_option_group("oracle");
  auto* b = group->add_option("--oracle-builtin", o.builtin, "Built-in model file");
  auto* c = group->add_option("--oracle-cmd", o.cmd, "Command line of a line-protocol oracle");
  auto* h = group->add_option("--oracle-http", o.http, "Base URL of an HTTP oracle");
  b->check(CLI::ExistingFile);
  for (auto* opt : {b, c, h}) {
    opt->allow_extra_args(false);
    if (!many) opt->expected(1);
  }
  if (many) {
    group->require_option(1, 0);
  } else {
    group->require_option(1);
  }
  cmd->add_option("--max-in-flight", o.max_in_flight, "Concurrent oracle requests")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--timeout-ms", o.timeout_ms, "Remote oracle reply timeout")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

std::vector<std::unique_ptr<Oracle>> open_oracles(const OracleOptions& o,
                                                  const ImageShape& shape,
                                                  int num_classes) {
  std::vector<std::unique_ptr<Oracle>> out;
  RemoteOptions remote;
  remote.max_in_flight = o.max_in_flight;
  remote.timeout = std::chrono::milliseconds(o.timeout_ms);
  for (const auto& path : o.builtin) {
    auto oracle = load_builtin_oracle(path, o.max_in_flight);
    if (oracle->input_shape() != shape || oracle->num_classes() != num_classes)
      throw ConfigurationError("--oracle-builtin " + path + " expects " +
                               oracle->input_shape().to_string() + " with " +
                               std::to_string(oracle->num_classes()) +
                               " classes, data is " + shape.to_string() + " with " +
                               std::to_string(num_classes));
    out.push_back(std::move(oracle));
  }
  for (const auto& line : o.cmd) {
    const auto argv = split_command_line(line);
    if (argv.empty()) throw ConfigurationError("--oracle-cmd is empty");
    out.push_back(subprocess_oracle(argv, shape, num_classes, remote));
  }
  for (const auto& url : o.http) out.push_back(http_oracle(url, shape, num_classes, remote));
  return out;
}

struct TransformOptions {
  double max_rotation = 0.0;
  double min_scale = 1.0;
  double max_scale = 1.0;
  std::string location = "anywhere";
  std::vector<double> at;
};

void add_transform_options(CLI::App* cmd, TransformOptions& t) {
  cmd->add_option("--max-rotation", t.max_rotation, "Rotation range [-r, r] in radians");
  cmd->add_option("--min-scale", t.min_scale, "Smallest patch scale");
  cmd->add_option("--max-scale", t.max_scale, "Largest patch scale");
  cmd->add_option("--location", t.location, "anywhere or fixed")
      ->check(CLI::IsMember({"anywhere", "fixed"}));
  cmd->add_option("--at", t.at, "Fixed patch center ROW,COL")->delimiter(',')->expected(2);
}

// Overrides fields of `base` with the transform flags that were given.
TransformConfig merge_transform(const CLI::App* cmd, const TransformOptions& t,
                                TransformConfig base) {
  if (cmd->count("--max-rotation")) base.max_rotation = t.max_rotation;
  if (cmd->count("--min-scale")) base.min_scale = t.min_scale;
  if (cmd->count("--max-scale")) base.max_scale = t.max_scale;
  if (cmd->count("--location"))
    base.location = t.location == "fixed" ? LocationPolicy::kFixed : LocationPolicy::kAnywhere;
  if (cmd->count("--at")) {
    base.location = LocationPolicy::kFixed;
    base.fixed_row = t.at[0];
    base.fixed_col = t.at[1];
  }
  try {
    base.validate();
  } catch (const ArgumentError& e) {
    throw ConfigurationError(e.what());
  }
  return base;
}

// ---- train-oracle

struct TrainOracleArgs {
  DataOptions data;
  std::string kind = "mlp";
  std::vector<int> hidden{64};
  TrainOptions train;
  std::uint64_t seed = 0;
  std::string out;
};

int run_train_oracle(const TrainOracleArgs& a) {
  const LabeledDataset d = load_data(a.data);
  if (d.empty()) throw ConfigurationError("--data selects no images");
  ModelSpec spec;
  spec.kind = model_kind_from_string(a.kind);
  if (spec.kind == ModelKind::kMlp) spec.hidden = a.hidden;
  Rng rng(a.seed);
  BuiltinModel model = train_builtin(d, spec, a.train, rng);
  model.metadata()["dataset_tag"] = std::string(to_string(d.split_tag()));
  if (!a.data.classes.empty()) model.metadata()["classes"] = a.data.classes;
  model.metadata()["tool_version"] = kToolVersion;
  model.save(a.out);
  std::printf("model: %s (%s)\n", a.out.c_str(), a.kind.c_str());
  std::printf("train accuracy: %s  loss: %.6f  images: %zu\n",
              format_percent(model.metadata().at("train_accuracy").get<double>()).c_str(),
              model.metadata().at("train_loss").get<double>(), d.size());
  return kExitOk;
}

// ---- attack

struct AttackArgs {
  DataOptions data;
  OracleOptions oracle;
  TransformOptions transform;
  std::string mode = "untargeted";
  int target = 0;
  int side = 5;
  std::string mask = "square";
  std::string init = "random-uniform";
  std::string init_from;
  int batch = 16;
  int eot = 4;
  std::uint64_t budget = 200000;
  std::uint64_t max_steps = 0;
  std::string stop = "budget";
  double stop_threshold = 0.0;
  int stop_interval = 50;
  double lr = 0.05;
  double mu = 0.01;
  int directions = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  bool decay_lr = false;
  bool no_final_eval = false;
  std::uint64_t seed = 0;
  std::string out;
};

AttackConfig build_attack_config(const CLI::App* cmd, const AttackArgs& a, int channels) {
  AttackConfig cfg;
  try {
    cfg.mode = attack_mode_from_string(a.mode);
    cfg.target_class = a.target;
    cfg.patch_side = a.side;
    cfg.channels = channels;
    cfg.mask = mask_shape_from_string(a.mask);
    cfg.init = a.init_from.empty() ? patch_init_from_string(a.init) : PatchInit::kFromFile;
    cfg.init_path = a.init_from;
    cfg.transform = merge_transform(cmd, a.transform, cfg.transform);
    cfg.batch_size = a.batch;
    cfg.eot_samples = a.eot;
    cfg.query_budget = a.budget;
    if (cmd->count("--max-steps")) cfg.max_steps = a.max_steps;
    cfg.stop = stop_criterion_from_string(a.stop);
    cfg.stop_threshold = a.stop_threshold;
    cfg.stop_check_interval = a.stop_interval;
    cfg.hyper.learning_rate = a.lr;
    cfg.hyper.mu = a.mu;
    cfg.hyper.directions = a.directions;
    cfg.hyper.beta1 = a.beta1;
    cfg.hyper.beta2 = a.beta2;
    cfg.hyper.decay_learning_rate = a.decay_lr;
    cfg.seed = a.seed;
    cfg.final_evaluation = !a.no_final_eval;
  } catch (const ArgumentError& e) {
    throw ConfigurationError(e.what());
  }
  return cfg;
}

int run_attack(const CLI::App* cmd, const AttackArgs& a) {
  DataOptions data = a.data;
  data.on = "train-patch";
  const LabeledDataset train = load_data(data);
  AttackConfig cfg = build_attack_config(cmd, a, train.shape().channels);
  try {
    cfg.validate(train.num_classes());
  } catch (const ArgumentError& e) {
    throw ConfigurationError(e.what());
  }
  auto oracles = open_oracles(a.oracle, train.shape(), train.num_classes());
  Oracle& oracle = *oracles.front();
  fs::create_directories(a.out);
  AttackResult result;
  try {
    result = train_bb_patch(train, oracle, cfg);
  } catch (const AttackAborted& e) {
    write_attack_outputs(a.out, e.partial());
    std::fprintf(stderr, "bbpatch: %s (partial results in %s)\n", e.what(), a.out.c_str());
    return kExitRuntime;
  }
  write_attack_outputs(a.out, result);
  std::printf("oracle: %s  steps: %zu  queries: %llu  stop: %s\n", oracle.id().c_str(),
              result.history.size(), static_cast<unsigned long long>(result.queries_used),
              result.stop_reason.c_str());
  if (result.clean_accuracy && result.final_accuracy)
    std::printf("patch-train accuracy: clean %s  patched %s\n",
                format_percent(*result.clean_accuracy).c_str(),
                format_percent(*result.final_accuracy).c_str());
  std::printf("bundle: %s  config hash: %s\n", a.out.c_str(),
              result.provenance.config_hash.c_str());
  return kExitOk;
}

// ---- eval

struct EvalArgs {
  DataOptions data;
  OracleOptions oracle;
  TransformOptions transform;
  std::vector<std::string> patches;
  bool no_patch = false;
  bool transfer = false;
  std::uint64_t seed = 0;
  std::string report;
  std::string dump_dir;
  std::size_t dump_count = 8;
};

int run_eval(const CLI::App* cmd, const EvalArgs& a) {
  const LabeledDataset d = load_data(a.data);
  if (!a.no_patch && a.patches.empty())
    throw ConfigurationError("--patch is required unless --no-patch is given");
  std::vector<PatchBundle> bundles;
  for (const auto& p : a.patches) bundles.push_back(load_patch_bundle(p));
  const TransformConfig policy = merge_transform(
      cmd, a.transform, bundles.empty() ? TransformConfig{} : bundles.front().transform);
  auto oracles = open_oracles(a.oracle, d.shape(), d.num_classes());
  Rng rng(a.seed);

  if (a.transfer) {
    if (bundles.empty()) throw ConfigurationError("--transfer needs at least one --patch");
    std::vector<NamedPatch> named;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      const auto& id = bundles[i].provenance.oracle_id;
      named.push_back({id.empty() ? a.patches[i] : id, bundles[i].patch});
    }
    std::vector<Oracle*> ptrs;
    for (auto& o : oracles) ptrs.push_back(o.get());
    const TransferMatrix m = transfer_matrix(named, ptrs, d, policy, rng);
    bool failed = false;
    for (std::size_t r = 0; r < m.trained_on.size(); ++r)
      for (std::size_t c = 0; c < m.tested_on.size(); ++c) {
        const auto& cell = m.cells[r][c];
        if (cell.report) {
          std::printf("%s -> %s: clean %s  patched %s\n", m.trained_on[r].c_str(),
                      m.tested_on[c].c_str(),
                      format_percent(cell.report->clean_accuracy).c_str(),
                      format_percent(*cell.report->patched_accuracy).c_str());
        } else {
          failed = true;
          std::printf("%s -> %s: error: %s\n", m.trained_on[r].c_str(),
                      m.tested_on[c].c_str(), cell.error.c_str());
        }
      }
    if (!a.report.empty()) write_report(m, report_format_for(a.report), a.report);
    return failed ? kExitRuntime : kExitOk;
  }

  if (oracles.size() != 1 || bundles.size() > 1)
    throw ConfigurationError("several oracles or patches need --transfer");
  const Patch* patch = a.no_patch ? nullptr : &bundles.front().patch;
  EvalReport report = evaluate(*oracles.front(), d, patch, policy, rng);
  report.seed = a.seed;
  if (patch) report.patch_source = bundles.front().provenance.oracle_id;
  std::printf("oracle: %s  images: %llu (%s)\n", report.oracle_id.c_str(),
              static_cast<unsigned long long>(report.n), report.dataset_tag.c_str());
  std::printf("clean accuracy: %s\n", format_percent(report.clean_accuracy).c_str());
  if (report.patched_accuracy)
    std::printf("patched accuracy: %s\n", format_percent(*report.patched_accuracy).c_str());
  if (!a.report.empty()) write_report(report, report_format_for(a.report), a.report);
  if (patch && !a.dump_dir.empty()) {
    Rng dump_rng = Rng(a.seed).derive("dump");
    dump_patched_examples(a.dump_dir, d, *patch, policy, dump_rng, a.dump_count);
  }
  return kExitOk;
}

// ---- apply

struct ApplyArgs {
  std::string image;
  std::string patch;
  std::string out;
  TransformOptions transform;
  double rotation = 0.0;
  double scale = 1.0;
  std::uint64_t seed = 0;
};

int run_apply(const CLI::App* cmd, const ApplyArgs& a) {
  const PatchBundle bundle = load_patch_bundle(a.patch);
  const Image x = read_png(a.image, bundle.patch.channels());
  AffineTransform t;
  if (cmd->count("--at")) {
    t = AffineTransform{a.rotation, a.scale, a.transform.at[0], a.transform.at[1]};
    if (!(t.scale > 0.0)) throw ConfigurationError("--scale must be positive");
    if (!transform_fits(t, bundle.patch.side(), x.shape()))
      throw ConfigurationError("pose puts the patch outside the " + x.shape().to_string() +
                               " image");
  } else {
    const TransformConfig policy = merge_transform(cmd, a.transform, bundle.transform);
    Rng rng = Rng(a.seed).derive("apply");
    try {
      t = sample_transform(policy, x.shape(), bundle.patch.side(), rng);
    } catch (const GeometryError& e) {
      throw ConfigurationError(e.what());
    }
  }
  write_png(a.out, apply_patch(x, bundle.patch, t));
  std::printf("pose: rotation %.6f  scale %.6f  center (%.3f, %.3f)\n", t.rotation, t.scale,
              t.center_row, t.center_col);
  return kExitOk;
}

void add_common(CLI::App* cmd, std::uint64_t& seed) {
  cmd->add_option("--seed", seed, "Master seed")->capture_default_str();
  // Listed for --help only; main() hands the file to the root app, the only
  // level where CLI11 reads config files.
  cmd->add_option("--config", "JSON file of option values (flags take precedence)")
      ->configurable(false);
}

// Moves `--config FILE` given after the subcommand in front of it and
// returns the subcommand name. Arguments come back reversed, as
// CLI::App::parse expects.
std::string hoist_config(std::vector<std::string>& args, const std::vector<std::string>& subcommands) {
  auto sub = std::find_first_of(args.begin(), args.end(), subcommands.begin(), subcommands.end());
  std::string section = sub == args.end() ? "" : *sub;
  if (sub != args.end()) {
    std::vector<std::string> moved;
    for (auto it = sub + 1; it != args.end();) {
      if (*it == "--") break;
      if (*it == "--config" && it + 1 != args.end()) {
        moved.push_back("--config=" + *(it + 1));
        it = args.erase(it, it + 2);
      } else if (it->rfind("--config=", 0) == 0) {
        moved.push_back(*it);
        it = args.erase(it);
      } else {
        ++it;
      }
    }
    sub = std::find(args.begin(), args.end(), section);
    args.insert(sub, moved.begin(), moved.end());
  }
  std::reverse(args.begin(), args.end());
  return section;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box adversarial patch toolkit"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  // train-oracle
  TrainOracleArgs ta;
  auto* train_cmd = app.add_subcommand("train-oracle", "Train a built-in classifier");
  add_data_options(train_cmd, ta.data, "full");
  train_cmd->add_option("--kind", ta.kind, "softmax-linear or mlp")
      ->check(CLI::IsMember({"softmax-linear", "linear", "mlp"}))
      ->capture_default_str();
  train_cmd->add_option("--hidden", ta.hidden, "Hidden layer sizes (mlp)")->delimiter(',');
  train_cmd->add_option("--epochs", ta.train.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--lr", ta.train.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--batch", ta.train.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--out", ta.out, "Model file to write")->required();
  add_common(train_cmd, ta.seed);

  // attack
  AttackArgs aa;
  auto* attack_cmd = app.add_subcommand("attack", "Optimize a patch against an oracle");
  add_data_options(attack_cmd, aa.data, "train-patch");
  add_oracle_options(attack_cmd, aa.oracle, false);
  add_transform_options(attack_cmd, aa.transform);
  attack_cmd->add_option("--mode", aa.mode)->check(CLI::IsMember({"untargeted", "targeted"}))->capture_default_str();
  attack_cmd->add_option("--target", aa.target, "Target class (targeted mode)");
  attack_cmd->add_option("--side", aa.side, "Patch side in pixels")->capture_default_str();
  attack_cmd->add_option("--mask", aa.mask)->check(CLI::IsMember({"square", "circle"}))->capture_default_str();
  attack_cmd->add_option("--init", aa.init)->check(CLI::IsMember({"random-uniform", "gray"}))->capture_default_str();
  attack_cmd->add_option("--init-from", aa.init_from, "Start from a saved patch bundle")->check(CLI::ExistingDirectory);
  attack_cmd->add_option("--batch", aa.batch, "Images per loss evaluation")->capture_default_str();
  attack_cmd->add_option("--eot", aa.eot, "Transform draws per image")->capture_default_str();
  attack_cmd->add_option("--budget", aa.budget, "Oracle image-query budget")->capture_default_str();
  attack_cmd->add_option("--max-steps", aa.max_steps, "Stop after this many steps");
  attack_cmd->add_option("--stop", aa.stop)
      ->check(CLI::IsMember({"budget", "accuracy-below", "loss-below"}))
      ->capture_default_str();
  attack_cmd->add_option("--stop-threshold", aa.stop_threshold);
  attack_cmd->add_option("--stop-interval", aa.stop_interval, "Steps between accuracy checks")->capture_default_str();
  attack_cmd->add_option("--lr", aa.lr)->capture_default_str();
  attack_cmd->add_option("--mu", aa.mu)->capture_default_str();
  attack_cmd->add_option("--directions", aa.directions, "Gaussian directions per step")->capture_default_str();
  attack_cmd->add_option("--beta1", aa.beta1)->capture_default_str();
  attack_cmd->add_option("--beta2", aa.beta2)->capture_default_str();
  attack_cmd->add_flag("--decay-lr", aa.decay_lr, "Use lr / sqrt(t)");
  attack_cmd->add_flag("--no-final-eval", aa.no_final_eval, "Skip the closing accuracy pass");
  attack_cmd->add_option("--out", aa.out, "Output directory")->required();
  add_common(attack_cmd, aa.seed);

  // eval
  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Measure clean and patched accuracy");
  add_data_options(eval_cmd, ea.data, "eval");
  add_oracle_options(eval_cmd, ea.oracle, true);
  add_transform_options(eval_cmd, ea.transform);
  eval_cmd->add_option("--patch", ea.patches, "Patch bundle directory (repeatable)")->check(CLI::ExistingDirectory);
  eval_cmd->add_flag("--no-patch", ea.no_patch, "Clean accuracy only")->excludes("--patch");
  eval_cmd->add_flag("--transfer", ea.transfer, "Evaluate every patch on every oracle");
  eval_cmd->add_option("--report", ea.report, "Write the report (.csv or .json)");
  eval_cmd->add_option("--dump-examples", ea.dump_dir, "Directory for patched example PNGs");
  eval_cmd->add_option("--dump-count", ea.dump_count)->capture_default_str();
  add_common(eval_cmd, ea.seed);

  // apply
  ApplyArgs pa;
  auto* apply_cmd = app.add_subcommand("apply", "Paste a patch onto an image");
  apply_cmd->add_option("--image", pa.image)->required()->check(CLI::ExistingFile);
  apply_cmd->add_option("--patch", pa.patch, "Patch bundle directory")->required()->check(CLI::ExistingDirectory);
  apply_cmd->add_option("--out", pa.out, "Output PNG")->required();
  add_transform_options(apply_cmd, pa.transform);
  apply_cmd->add_option("--rotation", pa.rotation, "Rotation for --at, radians");
  apply_cmd->add_option("--scale", pa.scale, "Scale for --at");
  add_common(apply_cmd, pa.seed);

  const std::vector<std::string> subcommands{"train-oracle", "attack", "eval", "apply"};
  std::vector<std::string> args(argv + 1, argv + argc);
  const std::string section = hoist_config(args, subcommands);
  app.set_config("--config", "", "JSON file of option values (flags take precedence)");
  app.config_formatter(std::make_shared<cli::JsonConfig>(section, subcommands));

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train_cmd) return run_train_oracle(ta);
    if (*attack_cmd) return run_attack(attack_cmd, aa);
    if (*eval_cmd) return run_eval(eval_cmd, ea);
    if (*apply_cmd) return run_apply(apply_cmd, pa);
  } catch (const ConfigurationError& e) {
    std::fprintf(stderr, "bbpatch: configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "bbpatch: configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bbpatch: error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
