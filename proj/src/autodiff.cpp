#include "jfpd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "jfpd/divergence.hpp"

namespace jfpd::ad {

namespace {

Tape& tape_of(Var v) {
  if (!v.valid()) throw std::invalid_argument("operation on an unbound Var");
  return *v.tape();
}

Tape& common_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("Vars belong to different tapes");
  return tape_of(a);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + a.shape().str() + " and " +
                         b.shape().str() + " differ");
  }
}

void accumulate(Tensor& into, const Tensor& g) {
  auto dst = into.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Elementwise op helper: fn(out_value, x_value) gives d out / d x.
template <typename Forward, typename Derivative>
Var unary(Var x, Forward forward, Derivative derivative) {
  Tape& tape = tape_of(x);
  Tensor out = x.value();
  for (double& v : out.data()) v = forward(v);
  return tape.record(std::move(out), {x},
                     [derivative](const Tensor& y, const Tensor& gy,
                                  std::span<const Tensor* const> in, std::span<Tensor* const> gin) {
                       if (!gin[0]) return;
                       auto g = gin[0]->data();
                       auto xv = in[0]->data();
                       auto yv = y.data();
                       auto gv = gy.data();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += gv[i] * derivative(yv[i], xv[i]);
                       }
                     });
}

}  // namespace

const Tensor& Var::value() const {
  if (!tape_) throw std::invalid_argument("value() on an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.backward = std::move(fn);
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("input Var belongs to another tape");
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  return push(std::move(n));
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("backward root belongs to another tape");
  if (backward_done_) throw StateError("backward() called twice without reset()");
  const Node& r = nodes_[root.id()];
  if (r.value.size() != 1) {
    throw ContractError("backward() needs a scalar root, got " + r.value.shape().str());
  }
  if (!r.requires_grad) throw ContractError("backward() root does not depend on any variable");

  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor(n.value.rows(), n.value.cols());
  }
  nodes_[root.id()].grad->fill(1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : n.inputs) {
      in_values.push_back(&nodes_[in].value);
      in_grads.push_back(nodes_[in].requires_grad ? &*nodes_[in].grad : nullptr);
    }
    n.backward(n.value, *n.grad, in_values, in_grads);
  }
  backward_done_ = true;
}

std::optional<Tensor> Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  return n.requires_grad ? n.grad : std::nullopt;
}

void Tape::reset() {
  for (auto& n : nodes_) n.grad.reset();
  backward_done_ = false;
}

Var matmul(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  return tape.record(jfpd::matmul(a.value(), b.value()), {a, b},
                     [](const Tensor&, const Tensor& g, std::span<const Tensor* const> in,
                        std::span<Tensor* const> gin) {
                       if (gin[0]) accumulate(*gin[0], matmul_nt(g, *in[1]));
                       if (gin[1]) accumulate(*gin[1], matmul_tn(*in[0], g));
                     });
}

Var add_row(Var x, Var bias) {
  Tape& tape = common_tape(x, bias);
  return tape.record(jfpd::add_row(x.value(), bias.value()), {x, bias},
                     [](const Tensor&, const Tensor& g, std::span<const Tensor* const>,
                        std::span<Tensor* const> gin) {
                       if (gin[0]) accumulate(*gin[0], g);
                       if (gin[1]) {
                         auto gb = gin[1]->data();
                         for (std::size_t i = 0; i < g.rows(); ++i) {
                           auto row = g.row(i);
                           for (std::size_t j = 0; j < row.size(); ++j) gb[j] += row[j];
                         }
                       }
                     });
}

Var add(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  accumulate(out, b.value());
  return tape.record(std::move(out), {a, b},
                     [](const Tensor&, const Tensor& g, std::span<const Tensor* const>,
                        std::span<Tensor* const> gin) {
                       if (gin[0]) accumulate(*gin[0], g);
                       if (gin[1]) accumulate(*gin[1], g);
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape.record(std::move(out), {a, b},
                     [](const Tensor&, const Tensor& g, std::span<const Tensor* const> in,
                        std::span<Tensor* const> gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (gin[0]) (*gin[0])[i] += g[i] * (*in[1])[i];
                         if (gin[1]) (*gin[1])[i] += g[i] * (*in[0])[i];
                       }
                     });
}

Var mul_const(Var a, const Tensor& c) {
  Tape& tape = tape_of(a);
  require_same_shape("mul_const", a.value(), c);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return tape.record(std::move(out), {a},
                     [c](const Tensor&, const Tensor& g, std::span<const Tensor* const>,
                         std::span<Tensor* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * c[i];
                     });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var reciprocal(Var a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double y, double) { return -y * y; });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double, double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var bound(Var x) {
  return unary(x, [](double v) { return v / (1.0 + v); },
               [](double, double v) { return 1.0 / ((1.0 + v) * (1.0 + v)); });
}

Var softmax(Var logits) {
  Tape& tape = tape_of(logits);
  return tape.record(softmax_rows(logits.value()), {logits},
                     [](const Tensor& y, const Tensor& g, std::span<const Tensor* const>,
                        std::span<Tensor* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < y.rows(); ++i) {
                         auto yr = y.row(i);
                         auto gr = g.row(i);
                         auto out = gin[0]->row(i);
                         const double inner = detail::dot(yr, gr);
                         for (std::size_t j = 0; j < yr.size(); ++j) out[j] += yr[j] * (gr[j] - inner);
                       }
                     });
}

Var select_rows(Var x, std::span<const std::size_t> indices) {
  Tape& tape = tape_of(x);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return tape.record(jfpd::select_rows(x.value(), idx), {x},
                     [idx](const Tensor&, const Tensor& g, std::span<const Tensor* const>,
                           std::span<Tensor* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         auto src = g.row(i);
                         auto dst = gin[0]->row(idx[i]);
                         for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                       }
                     });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return tape.record(Tensor(1, 1, total), {a},
                     [](const Tensor&, const Tensor& g, std::span<const Tensor* const>,
                        std::span<Tensor* const> gin) {
                       if (!gin[0]) return;
                       for (double& v : gin[0]->data()) v += g[0];
                     });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& tape = tape_of(logits);
  const Tensor& z = logits.value();
  if (labels.size() != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         z.shape().str() + " logits");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= z.cols()) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(z.cols()) + ")");
    }
  }
  const Tensor probs = softmax_rows(z);
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    total += mx + std::log(s) - row[static_cast<std::size_t>(labels[i])];
  }
  const double batch = static_cast<double>(z.rows());
  std::vector<int> ys(labels.begin(), labels.end());
  return tape.record(Tensor(1, 1, total / batch), {logits},
                     [probs, ys, batch](const Tensor&, const Tensor& g,
                                        std::span<const Tensor* const>,
                                        std::span<Tensor* const> gin) {
                       if (!gin[0]) return;
                       const double w = g[0] / batch;
                       for (std::size_t i = 0; i < probs.rows(); ++i) {
                         auto pr = probs.row(i);
                         auto out = gin[0]->row(i);
                         for (std::size_t j = 0; j < pr.size(); ++j) out[j] += w * pr[j];
                         out[static_cast<std::size_t>(ys[i])] -= w;
                       }
                     });
}

Var entropy_rows(Var p) {
  Tape& tape = tape_of(p);
  const Tensor& pv = p.value();
  Tensor out(pv.rows(), 1);
  for (std::size_t i = 0; i < pv.rows(); ++i) out(i, 0) = detail::entropy(pv.row(i));
  return tape.record(std::move(out), {p},
                     [](const Tensor&, const Tensor& g, std::span<const Tensor* const> in,
                        std::span<Tensor* const> gin) {
                       if (!gin[0]) return;
                       const Tensor& pv = *in[0];
                       for (std::size_t i = 0; i < pv.rows(); ++i) {
                         auto pr = pv.row(i);
                         auto out = gin[0]->row(i);
                         for (std::size_t j = 0; j < pr.size(); ++j) {
                           out[j] -= g[i] * (std::log(std::max(pr[j], kProbClamp)) + 1.0);
                         }
                       }
                     });
}

Var cosine_distance_rows(Var a, const Tensor& b) {
  Tape& tape = tape_of(a);
  require_same_shape("cosine_distance_rows", a.value(), b);
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) out(i, 0) = cosine_distance(av.row(i), b.row(i));
  return tape.record(std::move(out), {a},
                     [b](const Tensor&, const Tensor& g, std::span<const Tensor* const> in,
                         std::span<Tensor* const> gin) {
                       if (!gin[0]) return;
                       const Tensor& av = *in[0];
                       for (std::size_t i = 0; i < av.rows(); ++i) {
                         auto ar = av.row(i);
                         auto br = b.row(i);
                         const double na = std::sqrt(detail::dot(ar, ar));
                         const double nb = std::sqrt(detail::dot(br, br));
                         if (na < kNormFloor || nb < kNormFloor) continue;
                         const double ab = detail::dot(ar, br);
                         const double inv = 1.0 / (na * nb);
                         const double proj = ab / (na * na * na * nb);
                         auto out = gin[0]->row(i);
                         for (std::size_t j = 0; j < ar.size(); ++j) {
                           out[j] -= g[i] * (br[j] * inv - ar[j] * proj);
                         }
                       }
                     });
}

Var js_divergence_rows(Var p, const Tensor& q) {
  Tape& tape = tape_of(p);
  require_same_shape("js_divergence_rows", p.value(), q);
  const Tensor& pv = p.value();
  Tensor out(pv.rows(), 1);
  for (std::size_t i = 0; i < pv.rows(); ++i) out(i, 0) = detail::js_divergence(pv.row(i), q.row(i));
  return tape.record(std::move(out), {p},
                     [q](const Tensor&, const Tensor& g, std::span<const Tensor* const> in,
                         std::span<Tensor* const> gin) {
                       if (!gin[0]) return;
                       const Tensor& pv = *in[0];
                       for (std::size_t i = 0; i < pv.rows(); ++i) {
                         auto pr = pv.row(i);
                         auto qr = q.row(i);
                         auto out = gin[0]->row(i);
                         for (std::size_t j = 0; j < pr.size(); ++j) {
                           const double m = std::max(0.5 * (pr[j] + qr[j]), kProbClamp);
                           out[j] += g[i] * 0.5 * std::log(std::max(pr[j], kProbClamp) / m);
                         }
                       }
                     });
}

double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var y = fn(tape, xv);
    tape.backward(y);
    analytic = *tape.grad(xv);
  }
  auto eval = [&](const Tensor& at) {
    Tape tape;
    Var xv = tape.variable(at);
    return fn(tape, xv).value().item();
  };
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = eval(probe);
    probe[i] = x[i] - eps;
    const double down = eval(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace jfpd::ad
