#include "jfpd/trust.hpp"

#include <cmath>
#include <string>

#include "jfpd/tensor.hpp"

namespace jfpd {

double uncertainty_trust(const ProbVector& p_s, const ProbVector& p_t) {
  if (p_s.size() != p_t.size()) {
    throw DimensionError("uncertainty_trust: class counts " + std::to_string(p_s.size()) +
                         " and " + std::to_string(p_t.size()) + " differ");
  }
  return 1.0 / (1.0 + entropy(p_s) + entropy(p_t));
}

double alignment_trust(double d_feat) {
  if (!(d_feat >= 0.0 && d_feat < 1.0)) {
    throw DomainError("alignment_trust: feature divergence must lie in [0, 1)");
  }
  return 1.0 / (1.0 + d_feat);
}

TrustBounds trust_bounds(int classes) {
  if (classes < 2) throw DomainError("trust_bounds: need at least 2 classes");
  return {1.0 / (1.0 + 2.0 * std::log(static_cast<double>(classes))), 0.5};
}

TrustWeights trust_weights(const ProbVector& p_s, const ProbVector& p_t, double d_feat) {
  const TrustBounds b = trust_bounds(static_cast<int>(p_s.size()));
  return {uncertainty_trust(p_s, p_t), alignment_trust(d_feat), b.gamma1, b.gamma2};
}

}  // namespace jfpd
