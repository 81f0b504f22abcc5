#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "jfpd/autodiff.hpp"
#include "jfpd/divergence.hpp"
#include "jfpd/io.hpp"
#include "jfpd/model.hpp"
#include "support.hpp"

using namespace jfpd;

TEST_CASE("initialization") {
  const ModelDims dims = testing::toy_dims();
  CHECK(init_model(dims, 7) == init_model(dims, 7));
  CHECK_FALSE(init_model(dims, 7) == init_model(dims, 8));
  const ModelParams m = init_model(dims, 7);
  CHECK(m.all_finite());
  for (const auto& layer : m.backbone) {
    for (double b : layer.bias.data()) CHECK(b == 0.0);
  }
  CHECK(m.parameter_count() == (3 * 8 + 8) + (8 * 8 + 8) + (8 * 5 + 5) + (5 * 3 + 3));

  ModelDims bad = dims;
  bad.hidden = {8, 0};
  CHECK_THROWS(init_model(bad, 1));
  bad = dims;
  bad.classes = 0;
  CHECK_THROWS(init_model(bad, 1));
}

TEST_CASE("initial weight variance is s^2 / 3") {
  ModelDims dims;
  dims.input_dim = 100;
  dims.hidden = {100};
  dims.feature_dim = 100;
  dims.classes = 2;
  const ModelParams m = init_model(dims, 3);
  const Tensor& w = m.backbone[0].weight;  // 10^4 draws
  double mean = 0.0, var = 0.0;
  for (double v : w.data()) mean += v;
  mean /= static_cast<double>(w.size());
  for (double v : w.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size());
  const double s2 = 6.0 / 200.0;
  CHECK(std::abs(var - s2 / 3.0) < 0.05 * s2 / 3.0);
}

TEST_CASE("forward pass matches a hand evaluation") {
  ModelParams m;
  m.dims.input_dim = 2;
  m.dims.hidden = {2};
  m.dims.feature_dim = 2;
  m.dims.classes = 2;
  m.backbone = {{Tensor::from_rows({{1.0, -1.0}, {2.0, 0.5}}), Tensor::from_rows({{0.0, 0.25}})},
                {Tensor::from_rows({{1.0, 0.0}, {-1.0, 3.0}}), Tensor::from_rows({{0.5, -0.5}})}};
  m.head = {Tensor::from_rows({{1.0, -1.0}, {0.0, 2.0}}), Tensor::from_rows({{0.0, 0.0}})};
  const Tensor x = Tensor::from_rows({{1.0, 1.0}});
  // hidden = relu([3, -0.25]) = [3, 0]; features = [3 + 0.5, 0 - 0.5] (no ReLU)
  const Tensor f = forward_features(m, x);
  CHECK(f[0] == doctest::Approx(3.5));
  CHECK(f[1] == doctest::Approx(-0.5));
  // logits = [3.5, -3.5 - 1] = [3.5, -4.5]
  const Tensor p = forward_predict(m, x);
  CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-8.0))));
  CHECK_THROWS_AS(forward_features(m, Tensor(1, 3)), DimensionError);
}

TEST_CASE("forward pass consistency") {
  const ModelParams m = init_model(testing::toy_dims(), 5);
  const DomainDataset ds = testing::toy_dataset(3, 4, 3, 6);
  const Tensor all = forward_predict(m, ds.x);
  const Tensor composed = head_predict(m, forward_features(m, ds.x));
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const Tensor one = forward_predict(m, Tensor::row_vector(ds.x.row(r)));
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(one[c] == all(r, c));
      CHECK(composed(r, c) == all(r, c));
    }
    CHECK(on_simplex(all.row(r), 1e-12));
  }
  ModelParams zero_head = m;
  zero_head.head.weight.fill(0.0);
  const Tensor u = forward_predict(zero_head, ds.x);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
  const Tensor z = forward_features(init_model(testing::toy_dims(), 5), Tensor(1, 3));
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("tape forward equals the plain forward") {
  const ModelParams m = init_model(testing::toy_dims(), 5);
  const DomainDataset ds = testing::toy_dataset(3, 4, 3, 6);
  ad::Tape tape;
  const ForwardVars out = forward(bind(tape, m), tape.constant(ds.x));
  CHECK(out.probs.value() == forward_predict(m, ds.x));
  CHECK(out.features.value() == forward_features(m, ds.x));
}

TEST_CASE("cross-entropy gradients over all parameters match finite differences") {
  const DomainDataset ds = testing::toy_dataset(3, 4, 3, 12);
  Xoshiro256ss rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams m = testing::random_model(testing::toy_dims(), rng.next());
    ad::Tape tape;
    const ModelVars vars = bind(tape, m);
    const ad::Var loss = ad::cross_entropy(forward(vars, tape.constant(ds.x)).logits, ds.labels());
    tape.backward(loss);
    const auto analytic = testing::flatten(gradients(tape, vars, m));
    const auto numeric = testing::numeric_gradient(m, [&](const ModelParams& p) {
      const Tensor probs = forward_predict(p, ds.x);
      double s = 0.0;
      for (std::size_t r = 0; r < ds.size(); ++r) s -= std::log(probs(r, static_cast<std::size_t>(ds.labels()[r])));
      return s / static_cast<double>(ds.size());
    });
    CHECK(testing::relative_error(analytic, numeric) < 1e-5);
  }
}

TEST_CASE("accuracy") {
  const Tensor probs = Tensor::from_rows({{0.9, 0.1}, {0.2, 0.8}, {0.5, 0.5}, {0.4, 0.6}, {0.7, 0.3},
                                          {0.1, 0.9}, {0.6, 0.4}, {0.3, 0.7}, {0.55, 0.45}, {0.45, 0.55}});
  const std::vector<int> labels = {0, 1, 1, 1, 0, 0, 0, 1, 1, 1};
  // argmax: 0 1 0 1 0 1 0 1 0 1 -> correct at rows 0,1,3,4,6,7,9
  CHECK(accuracy_from_probs(probs, labels) == doctest::Approx(0.7));
  std::vector<int> flipped = labels;
  for (int& y : flipped) y = 1 - y;
  CHECK(accuracy_from_probs(probs, flipped) == doctest::Approx(0.3));
  CHECK_THROWS(accuracy_from_probs(Tensor(0, 2), {}));
  CHECK(argmax(std::vector<double>{0.3, 0.3, 0.1}) == 0);
}

TEST_CASE("learning-rate schedule") {
  CHECK(cosine_lr(0, 0.1, 10) == doctest::Approx(0.1));
  CHECK(cosine_lr(5, 0.1, 10) == doctest::Approx(0.05));
  CHECK(cosine_lr(9, 0.1, 10) < 0.003);
  CHECK(cosine_lr(10, 0.1, 10) == doctest::Approx(0.1));
  CHECK_THROWS_AS(cosine_lr(1, 0.1, 0), std::invalid_argument);
  CHECK(scheduled_lr(LrSchedule::constant, 3, 10, 0.2, 0) == 0.2);
  CHECK(scheduled_lr(LrSchedule::cosine, 0, 10, 0.2, 0) == doctest::Approx(0.2));
  CHECK(scheduled_lr(LrSchedule::cosine, 4, 10, 0.2, 4) == doctest::Approx(0.2));
}

TEST_CASE("source pretraining") {
  GaussianSpec spec;
  spec.classes = 2;
  spec.dim = 2;
  spec.n_per_class = 100;
  spec.radius = 4.0;
  spec.spread = 0.7;
  const DomainPair data = standardize(gen_gaussian_domains(spec, Shift{}, 2));
  ModelDims dims;
  const ModelParams init = init_model(dims, 2);

  SUBCASE("separable blobs reach 0.99 and the loss falls") {
    PretrainOptions opts;
    const PretrainResult res = pretrain_source(init, data.source, opts);
    REQUIRE(res.log.size() == 50);
    CHECK(res.log.back().accuracy >= 0.99);
    CHECK(evaluate_accuracy(res.params, data.source) >= 0.99);
    CHECK(res.log.back().loss < res.log.front().loss);
    CHECK(pretrain_source(init, data.source, opts).params == res.params);
  }
  SUBCASE("zero learning rate leaves the parameters untouched") {
    PretrainOptions opts;
    opts.epochs = 3;
    opts.lr = 0.0;
    CHECK(pretrain_source(init, data.source, opts).params == init);
  }
  SUBCASE("divergence aborts") {
    PretrainOptions opts;
    opts.epochs = 5;
    opts.lr = 1e300;
    opts.schedule = LrSchedule::constant;
    CHECK_THROWS_AS(pretrain_source(init, data.source, opts), TrainingDiverged);
  }
  SUBCASE("unlabeled source is rejected") {
    CHECK_THROWS(pretrain_source(init, data.source.without_labels(), PretrainOptions{}));
  }
}

TEST_CASE("checkpoints") {
  const ModelParams m = init_model(testing::toy_dims(), 17);
  const std::string bytes = serialize_checkpoint(m);
  CHECK(bytes.substr(0, 4) == "JFPD");
  CHECK(deserialize_checkpoint(bytes) == m);
  CHECK(serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes);

  std::string wrong_version = bytes;
  wrong_version[4] = 2;
  CHECK_THROWS_AS(deserialize_checkpoint(wrong_version), CheckpointError);
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(wrong_magic), CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), CheckpointError);

  const auto dir = std::filesystem::temp_directory_path() / "jfpd_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(m, dir / "m.ckpt");
  CHECK(load_checkpoint(dir / "m.ckpt") == m);
  CHECK(load_checkpoint(dir / "m.ckpt", m.dims) == m);
  ModelDims other = m.dims;
  other.classes = 4;
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", other), CheckpointError);
  CHECK_THROWS(load_checkpoint(dir / "missing.ckpt"));
  std::filesystem::remove_all(dir);
}
