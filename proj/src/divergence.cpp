#include "jfpd/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "jfpd/tensor.hpp"

namespace jfpd {

bool on_simplex(std::span<const double> p, double tol) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    total += v;
  }
  return !p.empty() && std::abs(total - 1.0) <= tol;
}

ProbVector::ProbVector(std::vector<double> p) : p_(std::move(p)) {
  if (!on_simplex(p_)) throw DomainError("probability vector is not on the simplex");
}

ProbVector ProbVector::uniform(std::size_t classes) {
  return ProbVector(std::vector<double>(classes, 1.0 / static_cast<double>(classes)));
}

ProbVector ProbVector::one_hot(std::size_t classes, std::size_t index) {
  std::vector<double> p(classes, 0.0);
  p.at(index) = 1.0;
  return ProbVector(std::move(p));
}

namespace detail {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(std::max(v, kProbClamp));
  }
  return h;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  // 0.5 KL(p||m) + 0.5 KL(q||m). Terms with zero mass contribute nothing.
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = std::max(0.5 * (p[i] + q[i]), kProbClamp);
    const double kp = p[i] > 0.0 ? p[i] * std::log(std::max(p[i], kProbClamp) / m) : 0.0;
    const double kq = q[i] > 0.0 ? q[i] * std::log(std::max(q[i], kProbClamp) / m) : 0.0;
    js += 0.5 * (kp + kq);
  }
  // Rounding can push the sum an ulp past the ln 2 ceiling.
  return std::clamp(js, 0.0, std::log(2.0));
}

}  // namespace detail

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_distance: dimensions " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
  const double na = std::sqrt(detail::dot(a, a));
  const double nb = std::sqrt(detail::dot(b, b));
  if (na < kNormFloor || nb < kNormFloor) return 1.0;
  const double cos = std::clamp(detail::dot(a, b) / (na * nb), -1.0, 1.0);
  return 1.0 - cos;
}

double bound(double x) {
  if (!(x >= 0.0)) throw DomainError("bound: expected a non-negative distance");
  return x / (1.0 + x);
}

double feature_divergence(std::span<const double> f_s, std::span<const double> f_t) {
  return bound(cosine_distance(f_s, f_t));
}

double entropy(const ProbVector& p) { return detail::entropy(p.values()); }

double js_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) {
    throw DimensionError("js_divergence: lengths " + std::to_string(p.size()) + " and " +
                         std::to_string(q.size()) + " differ");
  }
  return detail::js_divergence(p.values(), q.values());
}

double prediction_divergence(const ProbVector& p_s, const ProbVector& p_t) {
  return bound(js_divergence(p_s, p_t));
}

}  // namespace jfpd
