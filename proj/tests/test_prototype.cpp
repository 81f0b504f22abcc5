#include <doctest.h>

#include <cmath>
#include <vector>

#include "jfpd/divergence.hpp"
#include "jfpd/prototype.hpp"
#include "support.hpp"

using namespace jfpd;

TEST_CASE("prototypes match an independent per-class mean") {
  const DomainDataset ds = testing::toy_dataset(3, 5, 3, 8);
  const ModelParams m = init_model(testing::toy_dims(), 4);
  const PrototypeSet protos = compute_prototypes(m, ds);
  REQUIRE(protos.classes() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> feat(5, 0.0), pred(3, 0.0);
    int n = 0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
      if (ds.labels()[r] != static_cast<int>(c)) continue;
      const Tensor x = Tensor::row_vector(ds.x.row(r));
      const Tensor f = forward_features(m, x);
      const Tensor p = forward_predict(m, x);
      for (std::size_t j = 0; j < 5; ++j) feat[j] += f[j];
      for (std::size_t j = 0; j < 3; ++j) pred[j] += p[j];
      ++n;
    }
    const Prototype& proto = protos.lookup(c);
    CHECK(proto.count == 5);
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(proto.feature[j] - feat[j] / n) < 1e-12);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(proto.prediction[j] - pred[j] / n) < 1e-12);
    CHECK(on_simplex(proto.prediction.values()));
  }
}

TEST_CASE("single and duplicated samples") {
  DomainDataset ds;
  ds.x = Tensor::from_rows({{1.0, -2.0, 0.5}, {1.0, -2.0, 0.5}, {0.3, 0.3, 0.3}});
  ds.y = std::vector<int>{0, 0, 2};
  ds.classes = 3;
  const ModelParams m = init_model(testing::toy_dims(), 1);
  const PrototypeSet protos = compute_prototypes(m, ds);
  const Tensor f0 = forward_features(m, Tensor::row_vector(ds.x.row(0)));
  const Tensor f2 = forward_features(m, Tensor::row_vector(ds.x.row(2)));
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(protos.lookup(0).feature[j] == doctest::Approx(f0[j]).epsilon(1e-14));
    CHECK(protos.lookup(2).feature[j] == f2[j]);
  }
  CHECK_FALSE(protos.present(1));
  CHECK(protos.count(1) == 0);
  CHECK_THROWS_AS(protos.lookup(1), AbsentPrototype);
  CHECK_THROWS_AS(protos.lookup(7), AbsentPrototype);
}

TEST_CASE("empty dataset is rejected") {
  DomainDataset ds;
  ds.x = Tensor(0, 3);
  ds.y = std::vector<int>{};
  ds.classes = 3;
  CHECK_THROWS(compute_prototypes(init_model(testing::toy_dims(), 1), ds));
}

TEST_CASE("prototypes follow the current parameters") {
  const DomainDataset ds = testing::toy_dataset(3, 4, 3, 2);
  const PrototypeSet a = compute_prototypes(init_model(testing::toy_dims(), 1), ds);
  const PrototypeSet b = compute_prototypes(init_model(testing::toy_dims(), 2), ds);
  CHECK_FALSE(a == b);
  CHECK(a == compute_prototypes(init_model(testing::toy_dims(), 1), ds));
}

TEST_CASE("prototypes are invariant to dataset order") {
  const DomainDataset ds = testing::toy_dataset(3, 6, 3, 5);
  DomainDataset shuffled = ds;
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Xoshiro256ss rng(77);
  rng.shuffle(std::span<std::size_t>(order));
  shuffled.x = select_rows(ds.x, order);
  std::vector<int> y;
  for (auto i : order) y.push_back(ds.labels()[i]);
  shuffled.y = y;
  const ModelParams m = init_model(testing::toy_dims(), 9);
  const PrototypeSet a = compute_prototypes(m, ds), b = compute_prototypes(m, shuffled);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(a.lookup(c).feature[j] - b.lookup(c).feature[j]) < 1e-12);
  }
}

TEST_CASE("mini-batch prototypes") {
  const DomainDataset ds = testing::toy_dataset(3, 6, 3, 5);
  const ModelParams m = init_model(testing::toy_dims(), 3);
  const PrototypeSet full = compute_prototypes(m, ds);

  SUBCASE("an exhaustive draw equals the full prototype") {
    Xoshiro256ss rng(1);
    const PrototypeSet s = sample_minibatch_prototypes(m, ds, 6, rng);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(s.count(c) == 6);
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(s.lookup(c).feature[j] - full.lookup(c).feature[j]) < 1e-12);
    }
  }
  SUBCASE("fixed seed is bit-reproducible") {
    Xoshiro256ss r1(5), r2(5);
    CHECK(sample_minibatch_prototypes(m, ds, 4, r1) == sample_minibatch_prototypes(m, ds, 4, r2));
    CHECK(sample_minibatch_prototypes(m, ds, 10, r1) == sample_minibatch_prototypes(m, ds, 10, r2));
  }
  SUBCASE("k above the class size samples with replacement") {
    Xoshiro256ss rng(2);
    const PrototypeSet s = sample_minibatch_prototypes(m, ds, 10, rng);
    CHECK(s.count(0) == 10);
    CHECK(on_simplex(s.lookup(0).prediction.values()));
  }
  SUBCASE("k = 0 is rejected") {
    Xoshiro256ss rng(2);
    CHECK_THROWS(sample_minibatch_prototypes(m, ds, 0, rng));
  }
  SUBCASE("the redraw mean approaches the full prototype") {
    // Each redraw averages k = 2 of 6 rows without replacement; the mean of
    // 10^4 redraws should sit within 3 standard errors of the class mean.
    Xoshiro256ss rng(99);
    const int draws = 10000;
    std::vector<double> sum(4, 0.0), sq(4, 0.0);
    for (int i = 0; i < draws; ++i) {
      const PrototypeSet s = sample_minibatch_prototypes(m, ds, 2, rng);
      for (std::size_t j = 0; j < 5; ++j) {
        sum[j] += s.lookup(1).feature[j];
        sq[j] += s.lookup(1).feature[j] * s.lookup(1).feature[j];
      }
    }
    for (std::size_t j = 0; j < 5; ++j) {
      const double mean = sum[j] / draws;
      const double var = std::max(sq[j] / draws - mean * mean, 0.0);
      const double se = std::sqrt(var / draws);
      CHECK(std::abs(mean - full.lookup(1).feature[j]) <= 3.0 * se + 1e-12);
    }
  }
}

TEST_CASE("prediction prototypes stay on the simplex") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DomainDataset ds = testing::toy_dataset(4, 1 + static_cast<int>(seed % 7), 3, seed);
    const PrototypeSet p = compute_prototypes(init_model(testing::toy_dims(3, 4), seed), ds);
    for (std::size_t c = 0; c < 4; ++c) CHECK(on_simplex(p.lookup(c).prediction.values(), 1e-9));
  }
}
