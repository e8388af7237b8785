#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "bbpatch/attack.h"
#include "bbpatch/builtin_model.h"
#include "bbpatch/errors.h"
#include "test_support.h"

using namespace bbpatch;

namespace {

const ImageShape kShape{8, 8, 1};

LabeledDataset noise_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> images;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> px(kShape.size());
    for (float& v : px) v = static_cast<float>(rng.uniform(0.0, 0.6));
    images.emplace_back(kShape, std::move(px));
    labels.push_back(static_cast<int>(i % 2));
  }
  return LabeledDataset(kShape, 2, std::move(images), std::move(labels));
}

AttackConfig small_config() {
  AttackConfig cfg;
  cfg.patch_side = 3;
  cfg.transform = TransformConfig{0.3, 0.9, 1.1, LocationPolicy::kAnywhere, 0, 0};
  cfg.batch_size = 4;
  cfg.eot_samples = 2;
  cfg.hyper.directions = 3;
  cfg.query_budget = 8 * 4 * 20;
  cfg.seed = 42;
  return cfg;
}

std::vector<double> as_params(const Patch& p) {
  return std::vector<double>(p.pixels().begin(), p.pixels().end());
}

}  // namespace

TEST_SUITE("eot_loss") {
  TEST_CASE("uniform oracle gives +/- log(1/K)") {
    const ImageShape shape{6, 6, 1};
    auto oracle = make_uniform_oracle(shape, 3);
    const std::vector<Image> images(5, Image(shape, 0.2f));
    const std::vector<int> labels{0, 1, 2, 0, 1};
    Rng rng(1);
    const Patch p = init_patch(2, 1, PatchInit::kRandomUniform, rng);
    AttackConfig cfg;
    cfg.patch_side = 2;
    cfg.eot_samples = 3;
    cfg.mode = AttackMode::kUntargeted;
    CHECK(eot_loss(as_params(p), p, images, labels, *oracle, cfg, rng) ==
          doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-12));
    cfg.mode = AttackMode::kTargeted;
    cfg.target_class = 2;
    CHECK(eot_loss(as_params(p), p, images, labels, *oracle, cfg, rng) ==
          doctest::Approx(-std::log(1.0 / 3.0)).epsilon(1e-12));
    CHECK(oracle->queries() == 30);
  }

  TEST_CASE("one image, one draw equals a direct query") {
    auto oracle = make_brightness_oracle(kShape);
    const LabeledDataset d = noise_dataset(1, 2);
    Rng rng(3);
    const Patch p = init_patch(3, 1, PatchInit::kRandomUniform, rng);
    const std::vector<EotDraw> draws{{0, AffineTransform{0.2, 1.05, 4.1, 3.7}}};
    const double got = eot_loss_with_draws(as_params(p), p, d.images(), d.labels(), draws,
                                           *oracle, AttackMode::kUntargeted, 0);
    const Image patched = apply_patch(d.image(0), p, draws[0].transform);
    double mean = 0;
    for (float v : patched.pixels()) mean += v;
    mean /= static_cast<double>(patched.pixels().size());
    // label 0 under the brightness model has p = 1 - mean
    CHECK(got == doctest::Approx(std::log(1.0 - mean)).epsilon(1e-9));
  }

  TEST_CASE("batch 4 x eot 3 costs 12 queries") {
    auto oracle = make_brightness_oracle(kShape);
    const LabeledDataset d = noise_dataset(4, 4);
    Rng rng(5);
    const Patch p = init_patch(3, 1, PatchInit::kGray, rng);
    AttackConfig cfg = small_config();
    cfg.eot_samples = 3;
    (void)eot_loss(as_params(p), p, d.images(), d.labels(), *oracle, cfg, rng);
    CHECK(oracle->queries() == 12);
  }

  TEST_CASE("s draws average s single-draw losses") {
    auto oracle = make_brightness_oracle(kShape);
    const LabeledDataset d = noise_dataset(3, 6);
    Rng rng(7);
    const Patch p = init_patch(3, 1, PatchInit::kRandomUniform, rng);
    const auto draws = sample_eot_draws(3, 5, small_config().transform, kShape, 3, rng);
    for (AttackMode mode : {AttackMode::kUntargeted, AttackMode::kTargeted}) {
      const double all = eot_loss_with_draws(as_params(p), p, d.images(), d.labels(), draws,
                                             *oracle, mode, 1);
      double sum = 0;
      for (const EotDraw& e : draws)
        sum += eot_loss_with_draws(as_params(p), p, d.images(), d.labels(), std::span(&e, 1), *oracle,
                                   mode, 1);
      CHECK(all == doctest::Approx(sum / static_cast<double>(draws.size())).epsilon(1e-12));
    }
  }

  TEST_CASE("probe points outside [0, 1] are clamped for rendering") {
    auto oracle = make_brightness_oracle(kShape);
    const LabeledDataset d = noise_dataset(2, 8);
    Rng rng(9);
    const Patch p = init_patch(3, 1, PatchInit::kGray, rng);
    const std::vector<EotDraw> draws{{0, aligned_transform(3, 1, 1)}, {1, aligned_transform(3, 4, 2)}};
    const std::vector<double> over(9, 1.7), one(9, 1.0);
    CHECK(eot_loss_with_draws(over, p, d.images(), d.labels(), draws, *oracle, AttackMode::kTargeted, 1) ==
          eot_loss_with_draws(one, p, d.images(), d.labels(), draws, *oracle, AttackMode::kTargeted, 1));
    const std::vector<double> bad(9, NAN);
    CHECK_THROWS_AS(
        eot_loss_with_draws(bad, p, d.images(), d.labels(), draws, *oracle, AttackMode::kTargeted, 1),
        NumericError);
  }
}

TEST_SUITE("init_patch") {
  TEST_CASE("gray, random and from a bundle") {
    Rng a(10), b(10);
    const Patch gray = init_patch(4, 1, PatchInit::kGray, a);
    for (float v : gray.pixels()) CHECK(v == 0.5f);
    const Patch r1 = init_patch(4, 3, PatchInit::kRandomUniform, a, MaskShape::kCircle);
    (void)init_patch(4, 1, PatchInit::kGray, b);
    const Patch r2 = init_patch(4, 3, PatchInit::kRandomUniform, b, MaskShape::kCircle);
    CHECK(std::ranges::equal(r1.pixels(), r2.pixels()));
    for (float v : r1.pixels()) {
      CHECK(v >= 0.0f);
      CHECK(v < 1.0f);
    }
    CHECK(std::ranges::equal(r1.mask(), make_mask(4, MaskShape::kCircle)));

    bbpatch::testing::TempDir dir("init");
    std::vector<float> px(16);
    for (int i = 0; i < 16; ++i) px[i] = std::nextafter(static_cast<float>(i) / 16.0f, 1.0f);
    const Patch src(4, 1, px);
    save_patch_bundle(dir / "b", PatchBundle{src, TransformConfig{}, PatchProvenance{}});
    const Patch back = init_patch(4, 1, PatchInit::kFromFile, a, MaskShape::kSquare, dir / "b");
    CHECK(std::ranges::equal(back.pixels(), src.pixels()));
    CHECK_THROWS_AS(init_patch(5, 1, PatchInit::kFromFile, a, MaskShape::kSquare, dir / "b"),
                    ConsistencyError);
  }
}

TEST_SUITE("config") {
  TEST_CASE("json round trip and hash") {
    AttackConfig cfg = small_config();
    cfg.mode = AttackMode::kTargeted;
    cfg.target_class = 1;
    cfg.max_steps = 17;
    cfg.stop = StopCriterion::kAccuracyBelow;
    const nlohmann::json j = cfg;
    const AttackConfig back = j.get<AttackConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(config_hash(back) == config_hash(cfg));
    CHECK(config_hash(cfg).size() == 16);
    AttackConfig other = cfg;
    other.hyper.mu = 0.02;
    CHECK(config_hash(other) != config_hash(cfg));
  }

  TEST_CASE("enum names") {
    CHECK(attack_mode_from_string("targeted") == AttackMode::kTargeted);
    CHECK(stop_criterion_from_string(to_string(StopCriterion::kLossBelow)) == StopCriterion::kLossBelow);
    CHECK(patch_init_from_string("gray") == PatchInit::kGray);
    CHECK_THROWS_AS(attack_mode_from_string("sideways"), ArgumentError);
  }

  TEST_CASE("validation") {
    AttackConfig cfg = small_config();
    cfg.mode = AttackMode::kTargeted;
    cfg.target_class = 2;
    CHECK_THROWS_AS(cfg.validate(2), ArgumentError);
    cfg = small_config();
    cfg.eot_samples = 0;
    CHECK_THROWS_AS(cfg.validate(2), ArgumentError);
  }
}

TEST_SUITE("train_bb_patch") {
  TEST_CASE("max_steps = 0 returns the initial patch") {
    auto oracle = make_brightness_oracle(kShape);
    const LabeledDataset d = noise_dataset(10, 11);
    AttackConfig cfg = small_config();
    cfg.max_steps = 0;
    cfg.final_evaluation = false;
    const AttackResult r = train_bb_patch(d, *oracle, cfg);
    CHECK(std::ranges::equal(r.patch.pixels(), r.initial_patch.pixels()));
    CHECK(r.history.empty());
    CHECK(r.queries_used == 0);
    CHECK(oracle->queries() == 0);
  }

  TEST_CASE("budget below one step") {
    auto oracle = make_brightness_oracle(kShape);
    const LabeledDataset d = noise_dataset(10, 12);
    AttackConfig cfg = small_config();
    cfg.query_budget = 8 * 4 - 1;
    CHECK_THROWS_AS(train_bb_patch(d, *oracle, cfg), ArgumentError);
  }

  TEST_CASE("zero-weight oracle gives a flat objective") {
    auto model = std::make_shared<BuiltinModel>(BuiltinModel::zeros({ModelKind::kMlp, {4}}, kShape, 2));
    BuiltinOracle oracle("zero", model);
    const LabeledDataset d = noise_dataset(10, 13);
    const AttackResult r = train_bb_patch(d, oracle, small_config());
    REQUIRE(!r.history.empty());
    for (const auto& s : r.history) CHECK(s.objective == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    // A zero estimate leaves the patch where it started.
    CHECK(std::ranges::equal(r.patch.pixels(), r.initial_patch.pixels()));
  }

  TEST_CASE("query accounting under the budget stop") {
    auto oracle = make_brightness_oracle(kShape);
    const LabeledDataset d = noise_dataset(10, 14);
    AttackConfig cfg = small_config();
    cfg.final_evaluation = false;
    const std::uint64_t per_step = 4 * 2 * 4;
    cfg.query_budget = per_step * 7 + 5;
    const AttackResult r = train_bb_patch(d, *oracle, cfg);
    CHECK(r.history.size() == 7);
    for (std::size_t i = 0; i < r.history.size(); ++i) CHECK(r.history[i].evaluations == per_step * (i + 1));
    CHECK(r.queries_used == per_step * 7);
    CHECK(r.stop_reason == "budget");
    CHECK(oracle->queries() == r.queries_used);
  }

  TEST_CASE("the budget holds under every stop criterion") {
    const LabeledDataset d = noise_dataset(12, 15);
    for (StopCriterion stop : {StopCriterion::kBudget, StopCriterion::kAccuracyBelow, StopCriterion::kLossBelow}) {
      for (std::uint64_t budget : {32ull, 100ull, 333ull, 1000ull}) {
        auto oracle = make_brightness_oracle(kShape);
        AttackConfig cfg = small_config();
        cfg.stop = stop;
        cfg.stop_threshold = stop == StopCriterion::kLossBelow ? -10.0 : 0.0;
        cfg.stop_check_interval = 2;
        cfg.query_budget = budget;
        cfg.final_evaluation = false;
        const AttackResult r = train_bb_patch(d, *oracle, cfg);
        CAPTURE(budget);
        CHECK(r.queries_used <= budget);
        CHECK(oracle->queries() == r.queries_used);
        CHECK(r.history.back().evaluations == r.queries_used);
      }
    }
  }

  TEST_CASE("loss-below and accuracy-below stop early") {
    const LabeledDataset d = noise_dataset(12, 16);
    auto oracle = make_brightness_oracle(kShape);
    AttackConfig cfg = small_config();
    cfg.stop = StopCriterion::kLossBelow;
    cfg.stop_threshold = 10.0;
    const AttackResult r = train_bb_patch(d, *oracle, cfg);
    CHECK(r.history.size() == 1);
    CHECK(r.stop_reason == "loss-below");

    auto oracle2 = make_brightness_oracle(kShape);
    cfg.stop = StopCriterion::kAccuracyBelow;
    cfg.stop_threshold = 1.01;
    cfg.stop_check_interval = 3;
    cfg.query_budget = 100000;
    const AttackResult r2 = train_bb_patch(d, *oracle2, cfg);
    CHECK(r2.history.size() == 3);
    CHECK(r2.stop_reason == "accuracy-below");
    CHECK(r2.queries_used == 3 * 32 + 12);
  }

  TEST_CASE("targeted brightness attack lowers the loss") {
    auto oracle = make_brightness_oracle(kShape);
    const LabeledDataset d = noise_dataset(16, 17);
    AttackConfig cfg = small_config();
    cfg.mode = AttackMode::kTargeted;
    cfg.target_class = 1;
    cfg.init = PatchInit::kGray;
    cfg.query_budget = 32 * 60;
    const AttackResult r = train_bb_patch(d, *oracle, cfg);
    Rng rng(18);
    const auto draws = sample_eot_draws(d.size(), 4, cfg.transform, kShape, 3, rng);
    const double before = eot_loss_with_draws(as_params(r.initial_patch), r.initial_patch, d.images(),
                                              d.labels(), draws, *oracle, cfg.mode, 1);
    const double after = eot_loss_with_draws(as_params(r.patch), r.patch, d.images(), d.labels(), draws,
                                             *oracle, cfg.mode, 1);
    CHECK(after <= before);
    double mean = 0;
    for (float v : r.patch.pixels()) mean += v;
    CHECK(mean / 9 > 0.5);
    CHECK(r.final_accuracy.has_value());
    CHECK(r.final_eval_queries == 2 * d.size());
  }

  TEST_CASE("deterministic given the seed") {
    const LabeledDataset d = noise_dataset(12, 19);
    auto o1 = make_brightness_oracle(kShape);
    auto o2 = make_brightness_oracle(kShape);
    const AttackResult a = train_bb_patch(d, *o1, small_config());
    const AttackResult b = train_bb_patch(d, *o2, small_config());
    CHECK(std::ranges::equal(a.patch.pixels(), b.patch.pixels()));
    CHECK(history_csv(a.history) == history_csv(b.history));
    AttackConfig other = small_config();
    other.seed = 43;
    auto o3 = make_brightness_oracle(kShape);
    CHECK(!std::ranges::equal(train_bb_patch(d, *o3, other).patch.pixels(), a.patch.pixels()));
  }

  TEST_CASE("an oracle failure keeps the partial result") {
    const LabeledDataset d = noise_dataset(12, 20);
    int calls = 0;
    FunctionOracle flaky("flaky", kShape, 2, [&](const Image& x) {
      if (++calls > 32 * 3 + 5) throw TransportError("connection reset");
      return brightness_classifier()(x);
    });
    try {
      (void)train_bb_patch(d, flaky, small_config());
      FAIL("expected AttackAborted");
    } catch (const AttackAborted& e) {
      CHECK(e.partial().history.size() == 3);
      CHECK(e.partial().stop_reason == "aborted");
      CHECK(e.partial().queries_used >= 3 * 32);
      CHECK(std::string(e.what()).find("connection reset") != std::string::npos);
    }
  }

  TEST_CASE("mismatched inputs") {
    auto oracle = make_brightness_oracle(ImageShape{4, 4, 1});
    CHECK_THROWS_AS(train_bb_patch(noise_dataset(4, 21), *oracle, small_config()), ArgumentError);
    auto right = make_brightness_oracle(kShape);
    AttackConfig big = small_config();
    big.patch_side = 12;
    CHECK_THROWS_AS(train_bb_patch(noise_dataset(4, 22), *right, big), GeometryError);
    CHECK_THROWS_AS(train_bb_patch(LabeledDataset(kShape, 2), *right, small_config()), ArgumentError);
  }

  TEST_CASE("outputs on disk") {
    bbpatch::testing::TempDir dir("attack");
    auto oracle = make_brightness_oracle(kShape);
    const AttackResult r = train_bb_patch(noise_dataset(8, 23), *oracle, small_config());
    write_attack_outputs(dir.path(), r);
    const PatchBundle b = load_patch_bundle(dir.path());
    CHECK(std::ranges::equal(b.patch.pixels(), r.patch.pixels()));
    CHECK(b.provenance.oracle_id == "stub:brightness");
    CHECK(b.provenance.queries == r.queries_used);
    CHECK(bbpatch::testing::read_file(dir / "history.csv") == history_csv(r.history));
    const auto summary = nlohmann::json::parse(bbpatch::testing::read_file(dir / "attack.json"));
    CHECK(summary.at("steps") == r.history.size());
    CHECK(summary.at("stop_reason") == r.stop_reason);
  }
}
