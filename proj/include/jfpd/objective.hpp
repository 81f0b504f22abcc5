#pragma once

// Trust-aware joint feature-prediction discrepancy: the pairwise measure,
// pseudo-labeling, the per-sample loss against source prototypes and its
// batch mean.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "jfpd/autodiff.hpp"
#include "jfpd/divergence.hpp"
#include "jfpd/model.hpp"
#include "jfpd/prototype.hpp"

namespace jfpd {

struct JfpdConfig {
  /// Weight of the feature term; 1 - alpha weights the prediction term.
  double alpha = 0.5;
  /// Treat psi and phi as constants when differentiating.
  bool detach_trust = true;
  /// Drop samples whose pseudo-label has no prototype instead of throwing.
  bool skip_absent_class = true;
  /// When false, psi = phi = 1 (trust-removal ablation).
  bool use_trust = true;

  void validate() const;
};

/// Every sample in a batch was skipped.
class EmptyBatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleLossBreakdown {
  double d_feat = 0.0;
  double d_pred = 0.0;
  double psi = 1.0;
  double phi = 1.0;
  /// psi * d_feat
  double pgfd = 0.0;
  /// phi * d_pred
  double fgpd = 0.0;
  /// alpha * pgfd + (1 - alpha) * fgpd
  double total = 0.0;
  std::size_t pseudo_label = 0;
};

/// alpha * psi * d_feat + (1 - alpha) * phi * d_pred for one source/target pair.
double pair_jfpd(std::span<const double> f_s, std::span<const double> f_t, const ProbVector& p_s,
                 const ProbVector& p_t, double alpha);

/// Argmax with ties to the lowest index.
std::size_t pseudo_label(const ProbVector& p_t);

/// Non-differentiable per-sample value against an already chosen prototype.
SampleLossBreakdown evaluate_against(std::span<const double> f_t, const ProbVector& p_t,
                                     const Prototype& proto, const JfpdConfig& cfg);

struct BatchEvaluation {
  /// One entry per row; empty for skipped rows.
  std::vector<std::optional<SampleLossBreakdown>> samples;
  std::vector<std::size_t> kept;
  std::size_t skipped = 0;
  /// Field-wise mean over kept rows (pseudo_label is meaningless here).
  SampleLossBreakdown mean;
  /// Number of (psi, phi) pairs computed.
  std::size_t trust_evaluations = 0;
};

/// Pseudo-labels each row of (features, probs) and evaluates it against the
/// matching prototype. Throws EmptyBatch when nothing is kept.
BatchEvaluation evaluate_batch(const Tensor& features, const Tensor& probs,
                               const PrototypeSet& protos, const JfpdConfig& cfg);

struct BatchLoss {
  /// Scalar mean of per-sample totals over kept rows.
  ad::Var loss;
  BatchEvaluation eval;
};

/// Differentiable batch objective. Gradients reach the model through the
/// target features and predictions; prototypes are constants.
BatchLoss batch_loss(const ForwardVars& target, const PrototypeSet& protos, const JfpdConfig& cfg);

struct SampleLoss {
  ad::Var total;
  SampleLossBreakdown breakdown;
};

/// One target sample through the model. Returns nullopt when its pseudo-class
/// is absent and cfg.skip_absent_class is set.
std::optional<SampleLoss> sample_loss(ad::Tape& tape, const ModelVars& model,
                                      std::span<const double> x_t, const PrototypeSet& protos,
                                      const JfpdConfig& cfg);

/// Cross-entropy against the model's own argmax labels (confidence-free
/// fine-tuning baseline).
ad::Var pseudo_label_cross_entropy(const ForwardVars& target);

/// Mean per-sample objective value over all target rows, without gradients.
double mean_jfpd_diagnostic(const ModelParams& params, const Tensor& target_x,
                            const PrototypeSet& protos, const JfpdConfig& cfg);

struct TrustRemovalReport {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double mean_weighted = 0.0;
  double mean_unweighted = 0.0;
};

/// Compares trust-weighted and unweighted totals sample by sample on a frozen
/// model; a violation is a weighted total above the unweighted one.
TrustRemovalReport compare_trust_removal(const ModelParams& params, const Tensor& target_x,
                                         const PrototypeSet& protos, double alpha);

}  // namespace jfpd
