#pragma once

#include "jfpd/divergence.hpp"

namespace jfpd {

/// Per-sample reliability weights and the class-count lower bounds they obey.
struct TrustWeights {
  double psi = 1.0;
  double phi = 1.0;
  double gamma1 = 0.0;
  double gamma2 = 0.5;
};

struct TrustBounds {
  double gamma1;
  double gamma2;
};

/// 1 / (1 + H(p_s) + H(p_t)). Confident pairs get weight near 1.
double uncertainty_trust(const ProbVector& p_s, const ProbVector& p_t);

/// 1 / (1 + d_feat) for a normalized feature divergence in [0, 1).
double alignment_trust(double d_feat);

/// gamma1 = 1 / (1 + 2 ln C) since entropy is at most ln C; gamma2 = 1/2
/// since d_feat < 1.
TrustBounds trust_bounds(int classes);

TrustWeights trust_weights(const ProbVector& p_s, const ProbVector& p_t, double d_feat);

}  // namespace jfpd
