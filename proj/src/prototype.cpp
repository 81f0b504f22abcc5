#include "jfpd/prototype.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace jfpd {

const Prototype& PrototypeSet::lookup(std::size_t c) const {
  if (!present(c)) {
    throw AbsentPrototype("no source prototype for class " + std::to_string(c));
  }
  return *entries_[c];
}

namespace {

std::vector<std::vector<std::size_t>> members_by_class(const DomainDataset& dataset) {
  dataset.validate();
  if (!dataset.labeled()) throw std::invalid_argument("prototypes need a labeled dataset");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(dataset.classes));
  const auto& y = dataset.labels();
  for (std::size_t i = 0; i < y.size(); ++i) members[static_cast<std::size_t>(y[i])].push_back(i);
  return members;
}

PrototypeSet prototypes_for_rows(const ModelParams& params, const DomainDataset& dataset,
                                 const std::vector<std::vector<std::size_t>>& rows) {
  if (dataset.classes != params.dims.classes) {
    throw std::invalid_argument("dataset and model disagree on the class count");
  }
  // Forward every selected row once; duplicates reuse the same outputs.
  std::vector<std::size_t> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  std::sort(flat.begin(), flat.end());
  flat.erase(std::unique(flat.begin(), flat.end()), flat.end());

  const Tensor x = select_rows(dataset.x, flat);
  const Tensor features = forward_features(params, x);
  const Tensor probs = head_predict(params, features);

  std::vector<std::vector<std::size_t>> local(rows.size());
  for (std::size_t c = 0; c < rows.size(); ++c) {
    for (std::size_t i : rows[c]) {
      local[c].push_back(static_cast<std::size_t>(
          std::lower_bound(flat.begin(), flat.end(), i) - flat.begin()));
    }
  }
  return prototypes_from_outputs(features, probs, local);
}

}  // namespace

PrototypeSet prototypes_from_outputs(const Tensor& features, const Tensor& probs,
                                     const std::vector<std::vector<std::size_t>>& members) {
  std::vector<std::optional<Prototype>> entries(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) continue;
    // Sum in ascending row order so the result does not depend on draw order.
    std::vector<std::size_t> rows = members[c];
    std::sort(rows.begin(), rows.end());
    std::vector<double> f(features.cols(), 0.0);
    std::vector<double> p(probs.cols(), 0.0);
    for (std::size_t r : rows) {
      auto fr = features.row(r);
      auto pr = probs.row(r);
      for (std::size_t j = 0; j < f.size(); ++j) f[j] += fr[j];
      for (std::size_t j = 0; j < p.size(); ++j) p[j] += pr[j];
    }
    const auto n = static_cast<double>(rows.size());
    for (double& v : f) v /= n;
    for (double& v : p) v /= n;
    entries[c] = Prototype{std::move(f), ProbVector(std::move(p)), rows.size()};
  }
  return PrototypeSet(std::move(entries));
}

PrototypeSet compute_prototypes(const ModelParams& params, const DomainDataset& dataset) {
  return prototypes_for_rows(params, dataset, members_by_class(dataset));
}

PrototypeSet sample_minibatch_prototypes(const ModelParams& params, const DomainDataset& dataset,
                                         std::size_t k, Xoshiro256ss& rng) {
  if (k < 1) throw std::invalid_argument("sample_minibatch_prototypes: k must be >= 1");
  auto members = members_by_class(dataset);
  std::vector<std::vector<std::size_t>> drawn(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& pool = members[c];
    if (pool.empty()) continue;
    if (pool.size() >= k) {
      // Partial Fisher-Yates: the first k slots become a uniform k-subset.
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      drawn[c].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      for (std::size_t i = 0; i < k; ++i) drawn[c].push_back(pool[rng.below(pool.size())]);
    }
  }
  return prototypes_for_rows(params, dataset, drawn);
}

}  // namespace jfpd
