#pragma once

// Feature- and prediction-level divergences and their building blocks.
// All logarithms are natural.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace jfpd {

/// Argument outside a function's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Probabilities are clamped to this value inside logarithms.
inline constexpr double kProbClamp = 1e-12;
/// Feature vectors with a smaller Euclidean norm have no direction.
inline constexpr double kNormFloor = 1e-12;
/// Tolerance on the simplex sum when validating a ProbVector.
inline constexpr double kSimplexTol = 1e-9;

/// A point on the probability simplex. Construction validates entries in
/// [0, 1] and a sum within kSimplexTol of 1.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> p);
  explicit ProbVector(std::span<const double> p)
      : ProbVector(std::vector<double>(p.begin(), p.end())) {}

  static ProbVector uniform(std::size_t classes);
  static ProbVector one_hot(std::size_t classes, std::size_t index);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const { return p_; }

  bool operator==(const ProbVector&) const = default;

 private:
  std::vector<double> p_;
};

/// True when p has entries in [0, 1] summing to 1 within tol.
bool on_simplex(std::span<const double> p, double tol = kSimplexTol);

/// 1 - cos(a, b). Returns 1 when either norm is below kNormFloor.
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// x / (1 + x) for x >= 0.
double bound(double x);

double feature_divergence(std::span<const double> f_s, std::span<const double> f_t);

double entropy(const ProbVector& p);
double js_divergence(const ProbVector& p, const ProbVector& q);
double prediction_divergence(const ProbVector& p_s, const ProbVector& p_t);

namespace detail {
// Unvalidated kernels over raw rows; callers guarantee matching lengths.
double dot(std::span<const double> a, std::span<const double> b);
double entropy(std::span<const double> p);
double js_divergence(std::span<const double> p, std::span<const double> q);
}  // namespace detail

}  // namespace jfpd
