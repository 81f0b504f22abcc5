#include "jfpd/objective.hpp"

#include <string>

#include "jfpd/trust.hpp"

namespace jfpd {

void JfpdConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
}

double pair_jfpd(std::span<const double> f_s, std::span<const double> f_t, const ProbVector& p_s,
                 const ProbVector& p_t, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  const double d_feat = feature_divergence(f_s, f_t);
  const double d_pred = prediction_divergence(p_s, p_t);
  const double psi = uncertainty_trust(p_s, p_t);
  const double phi = alignment_trust(d_feat);
  return alpha * (psi * d_feat) + (1.0 - alpha) * (phi * d_pred);
}

std::size_t pseudo_label(const ProbVector& p_t) { return argmax(p_t.values()); }

SampleLossBreakdown evaluate_against(std::span<const double> f_t, const ProbVector& p_t,
                                     const Prototype& proto, const JfpdConfig& cfg) {
  SampleLossBreakdown b;
  b.pseudo_label = pseudo_label(p_t);
  b.d_feat = feature_divergence(f_t, proto.feature);
  b.d_pred = prediction_divergence(p_t, proto.prediction);
  if (cfg.use_trust) {
    b.psi = uncertainty_trust(proto.prediction, p_t);
    b.phi = alignment_trust(b.d_feat);
  }
  b.pgfd = b.psi * b.d_feat;
  b.fgpd = b.phi * b.d_pred;
  b.total = cfg.alpha * b.pgfd + (1.0 - cfg.alpha) * b.fgpd;
  return b;
}

BatchEvaluation evaluate_batch(const Tensor& features, const Tensor& probs,
                               const PrototypeSet& protos, const JfpdConfig& cfg) {
  cfg.validate();
  if (features.rows() != probs.rows()) throw DimensionError("evaluate_batch: row count mismatch");
  BatchEvaluation ev;
  ev.samples.resize(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const ProbVector p_t(probs.row(i));
    const std::size_t label = pseudo_label(p_t);
    if (!protos.present(label)) {
      if (!cfg.skip_absent_class) protos.lookup(label);  // throws AbsentPrototype
      ++ev.skipped;
      continue;
    }
    ev.samples[i] = evaluate_against(features.row(i), p_t, protos.lookup(label), cfg);
    ev.kept.push_back(i);
    if (cfg.use_trust) ++ev.trust_evaluations;
  }
  if (ev.kept.empty()) {
    throw EmptyBatch("all " + std::to_string(features.rows()) +
                     " samples were skipped for lack of a prototype");
  }
  SampleLossBreakdown& m = ev.mean;
  m = SampleLossBreakdown{0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t i : ev.kept) {
    const auto& s = *ev.samples[i];
    m.d_feat += s.d_feat;
    m.d_pred += s.d_pred;
    m.psi += s.psi;
    m.phi += s.phi;
    m.pgfd += s.pgfd;
    m.fgpd += s.fgpd;
    m.total += s.total;
  }
  const auto n = static_cast<double>(ev.kept.size());
  m.d_feat /= n;
  m.d_pred /= n;
  m.psi /= n;
  m.phi /= n;
  m.pgfd /= n;
  m.fgpd /= n;
  m.total /= n;
  return ev;
}

BatchLoss batch_loss(const ForwardVars& target, const PrototypeSet& protos, const JfpdConfig& cfg) {
  BatchLoss out;
  out.eval = evaluate_batch(target.features.value(), target.probs.value(), protos, cfg);
  const auto& kept = out.eval.kept;
  const std::size_t n = kept.size();
  ad::Tape& tape = *target.features.tape();

  const std::size_t feat_dim = target.features.value().cols();
  const std::size_t classes = target.probs.value().cols();
  Tensor z(n, feat_dim);
  Tensor q(n, classes);
  Tensor psi(n, 1, 1.0);
  Tensor phi(n, 1, 1.0);
  Tensor proto_entropy(n, 1);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = *out.eval.samples[kept[k]];
    const Prototype& proto = protos.lookup(s.pseudo_label);
    std::copy(proto.feature.begin(), proto.feature.end(), z.row(k).begin());
    std::copy(proto.prediction.values().begin(), proto.prediction.values().end(), q.row(k).begin());
    psi(k, 0) = s.psi;
    phi(k, 0) = s.phi;
    proto_entropy(k, 0) = entropy(proto.prediction);
  }

  ad::Var features = ad::select_rows(target.features, kept);
  ad::Var probs = ad::select_rows(target.probs, kept);
  ad::Var d_feat = ad::bound(ad::cosine_distance_rows(features, z));
  ad::Var d_pred = ad::bound(ad::js_divergence_rows(probs, q));

  ad::Var pgfd;
  ad::Var fgpd;
  if (cfg.use_trust && !cfg.detach_trust) {
    ad::Var entropies = ad::add(ad::entropy_rows(probs), tape.constant(proto_entropy));
    ad::Var psi_var = ad::reciprocal(ad::add_scalar(entropies, 1.0));
    ad::Var phi_var = ad::reciprocal(ad::add_scalar(d_feat, 1.0));
    pgfd = ad::mul(psi_var, d_feat);
    fgpd = ad::mul(phi_var, d_pred);
  } else {
    pgfd = ad::mul_const(d_feat, psi);
    fgpd = ad::mul_const(d_pred, phi);
  }
  ad::Var total = ad::add(ad::scale(pgfd, cfg.alpha), ad::scale(fgpd, 1.0 - cfg.alpha));
  out.loss = ad::mean(total);
  return out;
}

std::optional<SampleLoss> sample_loss(ad::Tape& tape, const ModelVars& model,
                                      std::span<const double> x_t, const PrototypeSet& protos,
                                      const JfpdConfig& cfg) {
  ForwardVars fwd = forward(model, tape.constant(Tensor::row_vector(x_t)));
  try {
    BatchLoss b = batch_loss(fwd, protos, cfg);
    return SampleLoss{b.loss, *b.eval.samples[0]};
  } catch (const EmptyBatch&) {
    return std::nullopt;
  }
}

ad::Var pseudo_label_cross_entropy(const ForwardVars& target) {
  const Tensor& probs = target.probs.value();
  std::vector<int> labels(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) labels[i] = static_cast<int>(argmax(probs.row(i)));
  return ad::cross_entropy(target.logits, labels);
}

double mean_jfpd_diagnostic(const ModelParams& params, const Tensor& target_x,
                            const PrototypeSet& protos, const JfpdConfig& cfg) {
  const Tensor features = forward_features(params, target_x);
  const Tensor probs = head_predict(params, features);
  return evaluate_batch(features, probs, protos, cfg).mean.total;
}

TrustRemovalReport compare_trust_removal(const ModelParams& params, const Tensor& target_x,
                                         const PrototypeSet& protos, double alpha) {
  const Tensor features = forward_features(params, target_x);
  const Tensor probs = head_predict(params, features);
  JfpdConfig weighted;
  weighted.alpha = alpha;
  JfpdConfig unweighted = weighted;
  unweighted.use_trust = false;
  const BatchEvaluation a = evaluate_batch(features, probs, protos, weighted);
  const BatchEvaluation b = evaluate_batch(features, probs, protos, unweighted);
  TrustRemovalReport report;
  report.samples = a.kept.size();
  for (std::size_t i : a.kept) {
    if (a.samples[i]->total > b.samples[i]->total) ++report.violations;
  }
  report.mean_weighted = a.mean.total;
  report.mean_unweighted = b.mean.total;
  return report;
}

}  // namespace jfpd
