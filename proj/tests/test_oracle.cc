#include <cmath>

#include "doctest.h"
#include "bbpatch/builtin_model.h"
#include "bbpatch/errors.h"
#include "bbpatch/oracle.h"
#include "test_support.h"

using namespace bbpatch;

namespace {

LabeledDataset blobs(std::size_t n, Rng& rng) {
  // Two Gaussian blobs on a 2x2 image, far apart in pixel space.
  std::vector<Image> images;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    std::vector<float> px(4);
    for (int k = 0; k < 4; ++k) {
      const double mean = (label == 1) == (k < 2) ? 0.8 : 0.2;
      px[k] = static_cast<float>(std::clamp(mean + 0.05 * rng.normal(), 0.0, 1.0));
    }
    images.emplace_back(ImageShape{2, 2, 1}, std::move(px));
    labels.push_back(label);
  }
  return LabeledDataset(ImageShape{2, 2, 1}, 2, std::move(images), std::move(labels));
}

}  // namespace

TEST_SUITE("simplex") {
  TEST_CASE("accepts, renormalizes within tolerance, rejects beyond") {
    CHECK(validate_simplex({0.25, 0.75}, 2) == Probabilities{0.25, 0.75});
    const Probabilities near = validate_simplex({0.5 + 4e-6, 0.5}, 2);
    CHECK(near[0] + near[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(validate_simplex({0.5, 0.6}, 2), TransportError);
    CHECK_THROWS_AS(validate_simplex({1.1, -0.1}, 2), TransportError);
    CHECK_THROWS_AS(validate_simplex({1.0}, 2), TransportError);
    CHECK_THROWS_AS(validate_simplex({NAN, 1.0}, 2), TransportError);
  }

  TEST_CASE("argmax ties go to the lowest index") {
    const double p[] = {0.25, 0.375, 0.375};
    CHECK(argmax(p) == 1);
  }
}

TEST_SUITE("builtin") {
  TEST_CASE("zero weights give the uniform vector") {
    const ImageShape shape{3, 3, 1};
    for (ModelSpec spec : {ModelSpec{ModelKind::kSoftmaxLinear, {}}, ModelSpec{ModelKind::kMlp, {4}}}) {
      const BuiltinModel m = BuiltinModel::zeros(spec, shape, 5);
      const Probabilities p = m.predict(Image(shape, 0.7f));
      for (double v : p) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
    }
  }

  TEST_CASE("hand-set two-class linear model is the logistic of the logit gap") {
    BuiltinModel m = BuiltinModel::zeros({ModelKind::kSoftmaxLinear, {}}, ImageShape{1, 1, 1}, 2);
    auto& layer = m.mutable_layers()[0];
    layer.weights = {-1.0, 2.0};
    layer.bias = {0.5, -0.25};
    for (float x : {0.0f, 0.3f, 1.0f}) {
      // logit gap z1 - z0 = (2x - 0.25) - (-x + 0.5) = 3x - 0.75
      const double gap = 3.0 * x - 0.75;
      const double p1 = 1.0 / (1.0 + std::exp(-gap));
      const Probabilities p = m.predict(Image(ImageShape{1, 1, 1}, x));
      CHECK(p[1] == doctest::Approx(p1).epsilon(1e-12));
      CHECK(p[0] == doctest::Approx(1.0 - p1).epsilon(1e-12));
    }
  }

  TEST_CASE("oracle preserves batch order and counts queries") {
    Rng rng(1);
    auto model = std::make_shared<BuiltinModel>(
        BuiltinModel::initialized({ModelKind::kMlp, {6}}, ImageShape{2, 2, 1}, 3, rng));
    model->mutable_layers()[1].weights.assign(18, 0.0);
    for (int k = 0; k < 18; ++k) model->mutable_layers()[1].weights[k] = 0.1 * (k % 5) - 0.2;
    BuiltinOracle oracle("m", model);
    std::vector<Image> batch;
    for (int i = 0; i < 8; ++i) batch.emplace_back(ImageShape{2, 2, 1}, static_cast<float>(i) / 8.0f);
    const auto probs = oracle.classify_batch(batch);
    REQUIRE(probs.size() == 8);
    for (int i = 0; i < 8; ++i) {
      const Probabilities direct = model->predict(batch[i]);
      for (int k = 0; k < 3; ++k) CHECK(probs[i][k] == doctest::Approx(direct[k]).epsilon(1e-12));
    }
    CHECK(oracle.queries() == 8);
    CHECK(oracle.classify_batch(batch) == probs);
    CHECK(oracle.queries() == 16);
    CHECK_THROWS_AS(oracle.classify(Image(ImageShape{3, 3, 1}, 0.0f)), ArgumentError);
  }

  TEST_CASE("model file round-trip is exact and deterministic") {
    bbpatch::testing::TempDir dir("model");
    Rng rng(2);
    BuiltinModel m = BuiltinModel::initialized({ModelKind::kMlp, {7, 3}}, ImageShape{4, 4, 1}, 3, rng);
    m.metadata()["note"] = "x";
    m.save(dir / "m.bbm");
    const BuiltinModel back = BuiltinModel::load(dir / "m.bbm");
    CHECK(back.dims() == std::vector<int>{16, 7, 3, 3});
    CHECK(back.serialize() == m.serialize());
    const Image img(ImageShape{4, 4, 1}, 0.3f);
    CHECK(back.predict(img) == m.predict(img));
    CHECK_THROWS_AS(BuiltinModel::deserialize("{\"format\":\"other\"}"), FormatError);
  }
}

TEST_SUITE("train_builtin") {
  TEST_CASE("separable blobs") {
    Rng data_rng(3);
    const LabeledDataset d = blobs(200, data_rng);
    Rng rng(4);
    const BuiltinModel m = train_builtin(d, {ModelKind::kSoftmaxLinear, {}}, TrainOptions{20, 0.5, 16}, rng);
    CHECK(m.metadata().at("train_accuracy").get<double>() >= 0.99);
    CHECK(measure_fit(m, d).accuracy >= 0.99);
    const BuiltinModel zero = BuiltinModel::zeros({ModelKind::kSoftmaxLinear, {}}, d.shape(), 2);
    CHECK(measure_fit(m, d).loss < measure_fit(zero, d).loss);
  }

  TEST_CASE("zero epochs returns the initialized model") {
    Rng data_rng(5);
    const LabeledDataset d = blobs(20, data_rng);
    const ModelSpec spec{ModelKind::kMlp, {5}};
    Rng a(6);
    const BuiltinModel trained = train_builtin(d, spec, TrainOptions{0, 0.1, 4}, a);
    Rng b(6);
    Rng init = b.derive("init");
    const BuiltinModel fresh = BuiltinModel::initialized(spec, d.shape(), 2, init);
    REQUIRE(trained.layers().size() == fresh.layers().size());
    for (std::size_t l = 0; l < fresh.layers().size(); ++l) {
      CHECK(trained.layers()[l].weights == fresh.layers()[l].weights);
      CHECK(trained.layers()[l].bias == fresh.layers()[l].bias);
    }
  }

  TEST_CASE("divergence is a training error") {
    // One step of this size pushes every logit past the double range, so
    // the next loss is non-finite.
    const ImageShape shape{8, 8, 1};
    const LabeledDataset d(shape, 2, std::vector<Image>(8, Image(shape, 1.0f)), std::vector<int>(8, 0));
    Rng rng(8);
    CHECK_THROWS_AS(train_builtin(d, {ModelKind::kSoftmaxLinear, {}}, TrainOptions{3, 1e308, 8}, rng),
                    TrainingError);
  }

  TEST_CASE("empty dataset") {
    Rng rng(9);
    const LabeledDataset empty(ImageShape{2, 2, 1}, 2);
    CHECK_THROWS_AS(train_builtin(empty, {}, TrainOptions{}, rng), ArgumentError);
  }

  TEST_CASE("MNIST 0-vs-1, mlp(64), 2000 images") {
    const LabeledDataset all = bbpatch::testing::mnist_zero_one();
    Rng split_rng(10);
    const auto [train, rest] = split_dataset(all, 2000, split_rng);
    Rng rng(11);
    const BuiltinModel m = train_builtin(train, {ModelKind::kMlp, {64}}, TrainOptions{}, rng);
    CHECK(m.metadata().at("train_accuracy").get<double>() >= 0.98);
    CHECK(m.metadata().at("train_size").get<std::size_t>() == 2000);
    Rng again(11);
    CHECK(train_builtin(train, {ModelKind::kMlp, {64}}, TrainOptions{}, again).serialize() == m.serialize());
  }
}

TEST_SUITE("stubs") {
  TEST_CASE("uniform and brightness classifiers") {
    auto u = make_uniform_oracle(ImageShape{2, 2, 1}, 4);
    for (double v : u->classify(Image(ImageShape{2, 2, 1}, 0.9f))) CHECK(v == 0.25);
    auto b = make_brightness_oracle(ImageShape{2, 2, 1});
    const Probabilities p = b->classify(Image(ImageShape{2, 2, 1}, 0.25f));
    CHECK(p[0] == doctest::Approx(0.75));
    CHECK(p[1] == doctest::Approx(0.25));
  }

  TEST_CASE("invalid responses surface as transport errors") {
    FunctionOracle bad("bad", ImageShape{1, 1, 1}, 2, [](const Image&) { return Probabilities{0.9, 0.9}; });
    CHECK_THROWS_AS(bad.classify(Image(ImageShape{1, 1, 1}, 0.0f)), TransportError);
  }
}
