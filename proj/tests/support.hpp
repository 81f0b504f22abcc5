#pragma once

// Shared fixtures for the unit tests: toy models and datasets, and a
// finite-difference gradient over every model parameter.

#include <cmath>
#include <functional>
#include <vector>

#include "jfpd/data.hpp"
#include "jfpd/model.hpp"
#include "jfpd/rng.hpp"

namespace testing {

inline jfpd::ModelDims toy_dims(int input = 3, int classes = 3) {
  jfpd::ModelDims d;
  d.input_dim = input;
  d.hidden = {8, 8};
  d.feature_dim = 5;
  d.classes = classes;
  return d;
}

/// Glorot weights plus random biases, so no pre-activation sits exactly on
/// a ReLU kink (zero biases put dead-input units at 0).
inline jfpd::ModelParams random_model(const jfpd::ModelDims& dims, std::uint64_t seed) {
  jfpd::ModelParams m = jfpd::init_model(dims, seed);
  jfpd::Xoshiro256ss rng(seed ^ 0x5eedULL);
  for (auto& layer : m.backbone) {
    for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-0.5, 0.5);
  }
  for (std::size_t i = 0; i < m.head.bias.size(); ++i) m.head.bias[i] = rng.uniform(-0.5, 0.5);
  return m;
}

/// n_per_class rows per class with class-dependent means.
inline jfpd::DomainDataset toy_dataset(int classes, int n_per_class, int dim, std::uint64_t seed) {
  jfpd::Xoshiro256ss rng(seed);
  jfpd::DomainDataset ds;
  ds.x = jfpd::Tensor(static_cast<std::size_t>(classes * n_per_class), static_cast<std::size_t>(dim));
  std::vector<int> y;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      const std::size_t r = y.size();
      for (int d = 0; d < dim; ++d) ds.x(r, static_cast<std::size_t>(d)) = rng.normal() + (d == c % dim ? 2.0 : 0.0);
      y.push_back(c);
    }
  }
  ds.y = y;
  ds.classes = classes;
  return ds;
}

/// Central differences of f over every parameter entry, in tensors() order.
inline std::vector<double> numeric_gradient(const jfpd::ModelParams& params,
                                            const std::function<double(const jfpd::ModelParams&)>& f,
                                            double eps = 1e-5) {
  std::vector<double> out;
  jfpd::ModelParams p = params;
  for (jfpd::Tensor* t : p.tensors()) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double keep = (*t)[i];
      (*t)[i] = keep + eps;
      const double up = f(p);
      (*t)[i] = keep - eps;
      const double down = f(p);
      (*t)[i] = keep;
      out.push_back((up - down) / (2.0 * eps));
    }
  }
  return out;
}

inline std::vector<double> flatten(const jfpd::ModelParams& params) {
  std::vector<double> out;
  for (const jfpd::Tensor* t : params.tensors()) {
    const auto d = t->data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

/// ||a - n|| / max(||a||, ||n||): norm-wise relative error of a gradient.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nn));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

}  // namespace testing
