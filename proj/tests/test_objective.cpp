#include <doctest.h>

#include <cmath>
#include <vector>

#include "jfpd/autodiff.hpp"
#include "jfpd/divergence.hpp"
#include "jfpd/objective.hpp"
#include "jfpd/prototype.hpp"
#include "jfpd/trust.hpp"
#include "support.hpp"

using namespace jfpd;

namespace {

struct Fixture {
  DomainDataset source = testing::toy_dataset(3, 6, 3, 21);
  DomainDataset target = testing::toy_dataset(3, 4, 3, 22);
  ModelParams model = testing::random_model(testing::toy_dims(), 23);
  PrototypeSet protos = compute_prototypes(model, source);
};

SampleLossBreakdown evaluate_row(const ModelParams& m, const Tensor& x, std::size_t r,
                                 const PrototypeSet& protos, const JfpdConfig& cfg) {
  const Tensor row = Tensor::row_vector(x.row(r));
  const Tensor f = forward_features(m, row);
  const Tensor probs = forward_predict(m, row);
  const ProbVector p(probs.data());
  return evaluate_against(f.data(), p, protos.lookup(pseudo_label(p)), cfg);
}

}  // namespace

TEST_CASE("pairwise measure fixtures") {
  const std::vector<double> a = {1.0, 0.0}, b = {0.0, 1.0};
  const ProbVector e0 = ProbVector::one_hot(3, 0);
  const ProbVector mixed({0.2, 0.5, 0.3});
  CHECK(pair_jfpd(a, a, mixed, mixed, 0.5) == doctest::Approx(0.0));
  CHECK(pair_jfpd(a, b, e0, e0, 1.0) == doctest::Approx(0.5));
  const double d_pred = prediction_divergence(e0, mixed);
  const double phi = alignment_trust(feature_divergence(a, b));
  CHECK(pair_jfpd(a, b, e0, mixed, 0.0) == phi * d_pred);
  CHECK_THROWS(pair_jfpd(a, b, e0, mixed, 1.5));
}

TEST_CASE("pseudo-labels take the argmax with ties to the lowest index") {
  CHECK(pseudo_label(ProbVector({0.1, 0.7, 0.2})) == 1);
  CHECK(pseudo_label(ProbVector::one_hot(5, 3)) == 3);
  CHECK(pseudo_label(ProbVector({0.5, 0.5})) == 0);
  CHECK(pseudo_label(ProbVector({0.2, 0.4, 0.4})) == 1);
}

TEST_CASE("config validation") {
  JfpdConfig cfg;
  cfg.alpha = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.alpha = 1.0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("a target equal to its prototype has zero loss") {
  Fixture fx;
  const Tensor x = Tensor::row_vector(fx.target.x.row(0));
  const Tensor f = forward_features(fx.model, x);
  const Tensor p = forward_predict(fx.model, x);
  const Prototype proto{std::vector<double>(f.data().begin(), f.data().end()),
                        ProbVector(std::vector<double>(p.data().begin(), p.data().end())), 1};
  const SampleLossBreakdown b = evaluate_against(f.data(), proto.prediction, proto, JfpdConfig{});
  CHECK(b.total == doctest::Approx(0.0).scale(1.0));
  CHECK(b.total < 1e-12);
}

TEST_CASE("per-sample breakdown identities") {
  Fixture fx;
  for (double alpha : {0.0, 0.3, 0.5, 1.0}) {
    JfpdConfig cfg;
    cfg.alpha = alpha;
    for (std::size_t r = 0; r < fx.target.size(); ++r) {
      const SampleLossBreakdown b = evaluate_row(fx.model, fx.target.x, r, fx.protos, cfg);
      CHECK(std::abs(b.total - (alpha * b.psi * b.d_feat + (1 - alpha) * b.phi * b.d_pred)) < 1e-12);
      CHECK(std::abs(b.total - (alpha * b.pgfd + (1 - alpha) * b.fgpd)) < 1e-12);
      if (alpha == 1.0) CHECK(b.total == doctest::Approx(b.pgfd));
      if (alpha == 0.0) CHECK(b.total == doctest::Approx(b.fgpd));
      const double ceiling = alpha * 2.0 / 3.0 + (1 - alpha) * std::log(2.0) / (1 + std::log(2.0));
      CHECK((b.total >= 0.0 && b.total <= ceiling));
    }
  }
}

TEST_CASE("removing trust never lowers a per-sample total") {
  Xoshiro256ss rng(31);
  int violations = 0;
  for (int i = 0; i < 2000; ++i) {
    Fixture fx;
    fx.model = init_model(testing::toy_dims(), static_cast<std::uint64_t>(i));
    fx.protos = compute_prototypes(fx.model, fx.source);
    const double alpha = rng.uniform();
    const std::size_t r = rng.below(fx.target.size());
    JfpdConfig with, without;
    with.alpha = without.alpha = alpha;
    without.use_trust = false;
    const auto a = evaluate_row(fx.model, fx.target.x, r, fx.protos, with);
    const auto b = evaluate_row(fx.model, fx.target.x, r, fx.protos, without);
    violations += a.total > b.total;
    violations += b.psi != 1.0 || b.phi != 1.0;
  }
  CHECK(violations == 0);
}

TEST_CASE("feature scale invariance") {
  const std::vector<double> f_t = {0.3, -1.2, 2.0}, z = {1.0, 0.5, -0.25};
  const ProbVector p_t({0.6, 0.3, 0.1});
  Prototype proto{z, ProbVector({0.2, 0.7, 0.1}), 4};
  const auto base = evaluate_against(f_t, p_t, proto, JfpdConfig{});
  for (double s : {1e-3, 0.5, 7.0, 1e4}) {
    std::vector<double> fs = f_t, zs = z;
    for (auto& v : fs) v *= s;
    for (auto& v : zs) v *= s;
    Prototype scaled{zs, proto.prediction, 4};
    const auto b = evaluate_against(fs, p_t, scaled, JfpdConfig{});
    CHECK(std::abs(b.d_feat - base.d_feat) < 1e-12);
    CHECK(std::abs(b.phi - base.phi) < 1e-12);
    CHECK(std::abs(b.pgfd - base.pgfd) < 1e-12);
    CHECK(std::abs(b.fgpd - base.fgpd) < 1e-12);
  }
}

TEST_CASE("sample loss gradients match finite differences") {
  Fixture fx;
  for (bool detach : {true, false}) {
    for (double alpha : {0.0, 0.5, 1.0}) {
      JfpdConfig cfg;
      cfg.alpha = alpha;
      cfg.detach_trust = detach;
      for (std::size_t r = 0; r < 4; ++r) {
        ad::Tape tape;
        const ModelVars vars = bind(tape, fx.model);
        const auto loss = sample_loss(tape, vars, fx.target.x.row(r), fx.protos, cfg);
        REQUIRE(loss.has_value());
        const auto base = evaluate_row(fx.model, fx.target.x, r, fx.protos, cfg);
        CHECK(loss->total.value().item() == doctest::Approx(base.total).epsilon(1e-12));
        tape.backward(loss->total);
        const auto analytic = testing::flatten(gradients(tape, vars, fx.model));
        const auto numeric = testing::numeric_gradient(fx.model, [&](const ModelParams& p) {
          const auto b = evaluate_row(p, fx.target.x, r, fx.protos, cfg);
          if (!detach) return b.total;
          // Trust held at its unperturbed value.
          return alpha * base.psi * b.d_feat + (1 - alpha) * base.phi * b.d_pred;
        });
        CHECK(testing::relative_error(analytic, numeric) < 1e-5);
      }
    }
  }
}

TEST_CASE("batch loss is the mean of the kept per-sample totals") {
  Fixture fx;
  JfpdConfig cfg;
  ad::Tape tape;
  const ModelVars vars = bind(tape, fx.model);
  const ForwardVars out = forward(vars, tape.constant(fx.target.x));
  const BatchLoss bl = batch_loss(out, fx.protos, cfg);
  double sum = 0.0;
  for (std::size_t r = 0; r < fx.target.size(); ++r) sum += evaluate_row(fx.model, fx.target.x, r, fx.protos, cfg).total;
  CHECK(std::abs(bl.loss.value().item() - sum / static_cast<double>(fx.target.size())) < 1e-12);
  CHECK(bl.eval.skipped == 0);
  CHECK(bl.eval.trust_evaluations == fx.target.size());
  CHECK(std::abs(bl.eval.mean.total - bl.loss.value().item()) < 1e-12);
}

TEST_CASE("batch loss of repeated rows and of concatenated halves") {
  Fixture fx;
  JfpdConfig cfg;
  auto loss_of = [&](const Tensor& x) {
    ad::Tape tape;
    const ModelVars vars = bind(tape, fx.model, false);
    return batch_loss(forward(vars, tape.constant(x)), fx.protos, cfg).loss.value().item();
  };
  const std::vector<std::size_t> same = {2, 2, 2, 2};
  const std::vector<std::size_t> one = {2};
  CHECK(std::abs(loss_of(select_rows(fx.target.x, same)) - loss_of(select_rows(fx.target.x, one))) < 1e-12);
  const std::vector<std::size_t> first = {0, 1, 2, 3, 4, 5}, second = {6, 7, 8, 9, 10, 11};
  const double whole = loss_of(fx.target.x);
  CHECK(std::abs(whole - 0.5 * (loss_of(select_rows(fx.target.x, first)) +
                                loss_of(select_rows(fx.target.x, second)))) < 1e-12);
}

TEST_CASE("batch loss gradients match finite differences") {
  Xoshiro256ss rng(4);
  for (int trial = 0; trial < 6; ++trial) {
    Fixture fx;
    fx.model = testing::random_model(testing::toy_dims(), rng.next());
    fx.protos = compute_prototypes(fx.model, fx.source);
    JfpdConfig cfg;
    cfg.alpha = rng.uniform();
    cfg.detach_trust = false;
    ad::Tape tape;
    const ModelVars vars = bind(tape, fx.model);
    const BatchLoss bl = batch_loss(forward(vars, tape.constant(fx.target.x)), fx.protos, cfg);
    tape.backward(bl.loss);
    const auto analytic = testing::flatten(gradients(tape, vars, fx.model));
    const auto numeric = testing::numeric_gradient(fx.model, [&](const ModelParams& p) {
      return evaluate_batch(forward_features(p, fx.target.x), forward_predict(p, fx.target.x), fx.protos, cfg).mean.total;
    });
    CHECK(testing::relative_error(analytic, numeric) < 1e-5);
  }
}

TEST_CASE("absent pseudo-classes are skipped or rejected") {
  Fixture fx;
  DomainDataset only_zero = fx.source;
  only_zero.y = std::vector<int>(fx.source.size(), 0);
  const PrototypeSet sparse = compute_prototypes(fx.model, only_zero);
  const Tensor probs = forward_predict(fx.model, fx.target.x);
  const Tensor feats = forward_features(fx.model, fx.target.x);
  std::size_t expect_kept = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r) expect_kept += argmax(probs.row(r)) == 0;

  JfpdConfig cfg;
  if (expect_kept == 0) {
    CHECK_THROWS_AS(evaluate_batch(feats, probs, sparse, cfg), EmptyBatch);
  } else {
    const BatchEvaluation ev = evaluate_batch(feats, probs, sparse, cfg);
    CHECK(ev.kept.size() == expect_kept);
    CHECK(ev.skipped == probs.rows() - expect_kept);
  }
  if (expect_kept < probs.rows()) {
    cfg.skip_absent_class = false;
    CHECK_THROWS_AS(evaluate_batch(feats, probs, sparse, cfg), AbsentPrototype);
  }

  PrototypeSet none(std::vector<std::optional<Prototype>>(3));
  CHECK_THROWS_AS(evaluate_batch(feats, probs, none, JfpdConfig{}), EmptyBatch);
}

TEST_CASE("standard baseline loss is cross-entropy on the model's own argmax") {
  Fixture fx;
  ad::Tape tape;
  const ModelVars vars = bind(tape, fx.model);
  const ForwardVars out = forward(vars, tape.constant(fx.target.x));
  const double got = pseudo_label_cross_entropy(out).value().item();
  const Tensor p = forward_predict(fx.model, fx.target.x);
  double expect = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) expect -= std::log(p(r, argmax(p.row(r))));
  CHECK(got == doctest::Approx(expect / static_cast<double>(p.rows())).epsilon(1e-12));
}

TEST_CASE("diagnostic grows with shift") {
  GaussianSpec spec;
  spec.classes = 3;
  spec.dim = 2;
  spec.n_per_class = 80;
  const DomainPair same = standardize(gen_gaussian_domains(spec, Shift{}, 4));
  const DomainPair shifted = standardize(gen_gaussian_domains(spec, Shift{90.0, 0.0, 1.0, 0.0}, 4));
  ModelDims dims;
  dims.input_dim = 2;
  dims.classes = 3;
  PretrainOptions opts;
  opts.epochs = 30;
  const ModelParams m = pretrain_source(init_model(dims, 4), same.source, opts).params;
  const PrototypeSet protos = compute_prototypes(m, same.source);
  const double copy = mean_jfpd_diagnostic(m, same.source.x, protos, JfpdConfig{});
  const double zero = mean_jfpd_diagnostic(m, same.target.x, protos, JfpdConfig{});
  const double heavy = mean_jfpd_diagnostic(m, shifted.target.x, protos, JfpdConfig{});
  CHECK(zero < 0.05);
  CHECK(copy < heavy);
  CHECK(zero < heavy);
}
