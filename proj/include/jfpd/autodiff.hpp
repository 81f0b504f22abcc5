#pragma once

// Tape-based reverse-mode differentiation over dense double matrices.
//
// A Tape records every primitive applied to its Vars in execution order, so
// node ids are already a topological order. backward() walks the tape once
// in reverse. The tape is rebuilt on every forward pass.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "jfpd/tensor.hpp"

namespace jfpd::ad {

/// Misuse of backward(): non-scalar root or a root with no tracked inputs.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// backward() called twice without an intervening reset().
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its Tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// (output value, output grad, input values, input grad accumulators).
  /// An accumulator is null when that input needs no gradient.
  using BackwardFn = std::function<void(const Tensor&, const Tensor&,
                                        std::span<const Tensor* const>, std::span<Tensor* const>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is retained.
  Var variable(Tensor value);
  /// Leaf that never receives a gradient.
  Var constant(Tensor value);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn);

  void backward(Var root);
  /// Gradient of a node after backward(); empty for nodes outside the
  /// differentiable subgraph (constants and anything computed only from them).
  std::optional<Tensor> grad(Var v) const;
  /// Drops accumulated gradients so backward() may run again.
  void reset();

  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<Tensor> grad;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Primitives. Shapes are checked eagerly and reported as DimensionError.
Var matmul(Var a, Var b);
Var add_row(Var x, Var bias);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var mul_const(Var a, const Tensor& c);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var reciprocal(Var a);
Var relu(Var x);
Var softmax(Var logits);
/// Gathers rows (repeats allowed); gradients scatter-add back.
Var select_rows(Var x, std::span<const std::size_t> indices);
Var sum(Var a);
Var mean(Var a);
/// Mean over rows of -log softmax(logits)[label], via log-sum-exp.
Var cross_entropy(Var logits, std::span<const int> labels);
/// x / (1 + x), elementwise.
Var bound(Var x);
/// Per-row Shannon entropy in nats, probabilities clamped at 1e-12 inside log.
Var entropy_rows(Var p);
/// Per-row cosine distance to the matching row of a constant matrix (B x 1).
Var cosine_distance_rows(Var a, const Tensor& b);
/// Per-row Jensen-Shannon divergence to the matching row of a constant (B x 1).
Var js_divergence_rows(Var p, const Tensor& q);

/// Largest |analytic - central difference| / max(1, |analytic|) over entries of x.
double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& x, double eps);

}  // namespace jfpd::ad
