#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "jfpd/data.hpp"
#include "jfpd/divergence.hpp"
#include "jfpd/model.hpp"
#include "jfpd/rng.hpp"

namespace jfpd {

class AbsentPrototype : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Source summary for one class: mean feature and mean prediction.
struct Prototype {
  std::vector<double> feature;
  ProbVector prediction;
  std::size_t count = 0;

  bool operator==(const Prototype&) const = default;
};

/// Per-class prototypes. Classes with no contributing samples are absent.
class PrototypeSet {
 public:
  PrototypeSet() = default;
  explicit PrototypeSet(std::vector<std::optional<Prototype>> entries)
      : entries_(std::move(entries)) {}

  std::size_t classes() const { return entries_.size(); }
  bool present(std::size_t c) const { return c < entries_.size() && entries_[c].has_value(); }
  /// Throws AbsentPrototype for a class without samples.
  const Prototype& lookup(std::size_t c) const;
  std::size_t count(std::size_t c) const { return present(c) ? entries_[c]->count : 0; }

  bool operator==(const PrototypeSet&) const = default;

 private:
  std::vector<std::optional<Prototype>> entries_;
};

/// Mean feature and prediction per class over the whole labeled dataset,
/// under the model's current parameters.
PrototypeSet compute_prototypes(const ModelParams& params, const DomainDataset& dataset);

/// Same, over k samples per class: without replacement when the class has
/// at least k samples, with replacement otherwise.
PrototypeSet sample_minibatch_prototypes(const ModelParams& params, const DomainDataset& dataset,
                                         std::size_t k, Xoshiro256ss& rng);

/// Averages precomputed per-sample outputs; `members[c]` lists rows of class c.
PrototypeSet prototypes_from_outputs(const Tensor& features, const Tensor& probs,
                                     const std::vector<std::vector<std::size_t>>& members);

}  // namespace jfpd
