#include "jfpd/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <sstream>

#include "jfpd/io.hpp"
#include "jfpd/rng.hpp"

namespace jfpd {

std::string ModelDims::str() const {
  std::ostringstream ss;
  ss << input_dim;
  for (int h : hidden) ss << "-" << h;
  ss << "-" << feature_dim << "-" << classes;
  return ss.str();
}

namespace {

std::vector<int> layer_widths(const ModelDims& dims) {
  std::vector<int> widths{dims.input_dim};
  widths.insert(widths.end(), dims.hidden.begin(), dims.hidden.end());
  widths.push_back(dims.feature_dim);
  return widths;
}

void validate_dims(const ModelDims& dims) {
  for (int w : layer_widths(dims)) {
    if (w <= 0) throw std::invalid_argument("model dims " + dims.str() + " contain an empty layer");
  }
  if (dims.classes < 2) throw std::invalid_argument("model needs at least 2 classes");
}

Layer glorot_layer(int fan_in, int fan_out, Xoshiro256ss& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Layer layer{Tensor(static_cast<std::size_t>(fan_in), static_cast<std::size_t>(fan_out)),
              Tensor(1, static_cast<std::size_t>(fan_out))};
  for (double& w : layer.weight.data()) w = rng.uniform(-s, s);
  return layer;
}

Tensor affine(const Layer& layer, const Tensor& x) {
  return add_row(matmul(x, layer.weight), layer.bias);
}

}  // namespace

bool ModelParams::all_finite() const {
  const auto ts = tensors();
  return std::all_of(ts.begin(), ts.end(), [](const Tensor* t) { return t->all_finite(); });
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& layer : backbone) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  out.push_back(&head.weight);
  out.push_back(&head.bias);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : backbone) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  out.push_back(&head.weight);
  out.push_back(&head.bias);
  return out;
}

ModelParams init_model(const ModelDims& dims, std::uint64_t seed) {
  validate_dims(dims);
  Xoshiro256ss rng(seed);
  ModelParams params;
  params.dims = dims;
  const auto widths = layer_widths(dims);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    params.backbone.push_back(glorot_layer(widths[i], widths[i + 1], rng));
  }
  params.head = glorot_layer(dims.feature_dim, dims.classes, rng);
  return params;
}

Tensor forward_features(const ModelParams& params, const Tensor& x) {
  if (x.cols() != static_cast<std::size_t>(params.dims.input_dim)) {
    throw DimensionError("model expects input dim " + std::to_string(params.dims.input_dim) +
                         ", got " + x.shape().str());
  }
  Tensor h = x;
  for (std::size_t i = 0; i < params.backbone.size(); ++i) {
    h = affine(params.backbone[i], h);
    if (i + 1 < params.backbone.size()) h = relu(h);
  }
  return h;
}

Tensor forward_logits(const ModelParams& params, const Tensor& x) {
  return affine(params.head, forward_features(params, x));
}

Tensor forward_predict(const ModelParams& params, const Tensor& x) {
  return softmax_rows(forward_logits(params, x));
}

Tensor head_predict(const ModelParams& params, const Tensor& features) {
  return softmax_rows(affine(params.head, features));
}

std::vector<ad::Var> ModelVars::all() const {
  std::vector<ad::Var> out;
  for (const auto& [w, b] : backbone) {
    out.push_back(w);
    out.push_back(b);
  }
  out.push_back(head.first);
  out.push_back(head.second);
  return out;
}

ModelVars bind(ad::Tape& tape, const ModelParams& params, bool track) {
  auto leaf = [&](const Tensor& t) { return track ? tape.variable(t) : tape.constant(t); };
  ModelVars vars;
  for (const auto& layer : params.backbone) {
    vars.backbone.emplace_back(leaf(layer.weight), leaf(layer.bias));
  }
  vars.head = {leaf(params.head.weight), leaf(params.head.bias)};
  return vars;
}

ForwardVars forward(const ModelVars& vars, ad::Var x) {
  ad::Var h = x;
  for (std::size_t i = 0; i < vars.backbone.size(); ++i) {
    h = ad::add_row(ad::matmul(h, vars.backbone[i].first), vars.backbone[i].second);
    if (i + 1 < vars.backbone.size()) h = ad::relu(h);
  }
  ad::Var logits = ad::add_row(ad::matmul(h, vars.head.first), vars.head.second);
  return {h, logits, ad::softmax(logits)};
}

ModelParams gradients(const ad::Tape& tape, const ModelVars& vars, const ModelParams& like) {
  ModelParams grad = like;
  auto dst = grad.tensors();
  const auto src = vars.all();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto g = tape.grad(src[i]);
    if (g) {
      *dst[i] = std::move(*g);
    } else {
      dst[i]->fill(0.0);
    }
  }
  return grad;
}

void sgd_step(ModelParams& params, const ModelParams& grad, double lr) {
  auto dst = params.tensors();
  const auto src = grad.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto d = dst[i]->data();
    auto g = src[i]->data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] -= lr * g[k];
  }
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

double accuracy_from_probs(const Tensor& probs, const std::vector<int>& labels) {
  if (probs.rows() == 0) throw std::invalid_argument("accuracy of an empty dataset");
  if (labels.size() != probs.rows()) throw DimensionError("accuracy: label count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (argmax(probs.row(i)) == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

double evaluate_accuracy(const ModelParams& params, const DomainDataset& dataset) {
  if (dataset.size() == 0) throw std::invalid_argument("accuracy of an empty dataset");
  return accuracy_from_probs(forward_predict(params, dataset.x), dataset.labels());
}

namespace {

constexpr char kMagic[4] = {'J', 'F', 'P', 'D'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xFF);
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t take(int width) {
    if (bytes_.size() - pos_ < static_cast<std::size_t>(width)) {
      throw CheckpointError("checkpoint truncated at offset " + std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    }
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  double f64() { return std::bit_cast<double>(take(8)); }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 4;
};

}  // namespace

std::string serialize_checkpoint(const ModelParams& params) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.dims.input_dim));
  put_u32(out, static_cast<std::uint32_t>(params.dims.hidden.size()));
  for (int h : params.dims.hidden) put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(params.dims.feature_dim));
  put_u32(out, static_cast<std::uint32_t>(params.dims.classes));
  for (const Tensor* t : params.tensors()) {
    for (double v : t->data()) put_f64(out, v);
  }
  return out;
}

ModelParams deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a JFPD checkpoint (bad magic)");
  }
  Cursor c(bytes);
  const std::uint32_t version = c.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ModelDims dims;
  dims.input_dim = static_cast<int>(c.u32());
  const std::uint32_t n_hidden = c.u32();
  if (n_hidden > 64) throw CheckpointError("implausible hidden layer count in checkpoint");
  dims.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) dims.hidden.push_back(static_cast<int>(c.u32()));
  dims.feature_dim = static_cast<int>(c.u32());
  dims.classes = static_cast<int>(c.u32());
  ModelParams params;
  try {
    params = init_model(dims, 0);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid dims in checkpoint: ") + e.what());
  }
  for (Tensor* t : params.tensors()) {
    for (double& v : t->data()) v = c.f64();
  }
  if (!c.done()) {
    throw CheckpointError("trailing bytes after parameters at offset " + std::to_string(c.offset()));
  }
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

ModelParams load_checkpoint(const std::filesystem::path& path, const ModelDims& expected) {
  ModelParams params = load_checkpoint(path);
  if (!(params.dims == expected)) {
    throw CheckpointError("checkpoint dims " + params.dims.str() + " do not match expected " +
                          expected.str());
  }
  return params;
}

double cosine_lr(std::size_t step, double base_lr, long period) {
  if (period <= 0) throw std::invalid_argument("cosine_lr: restart period must be positive");
  const auto p = static_cast<std::size_t>(period);
  const double phase = static_cast<double>(step % p) / static_cast<double>(p);
  return base_lr * (1.0 + std::cos(std::numbers::pi * phase)) / 2.0;
}

double scheduled_lr(LrSchedule schedule, int epoch, int epochs, double base_lr, int restart_period) {
  if (schedule == LrSchedule::constant) return base_lr;
  const int period = restart_period > 0 ? restart_period : std::max(epochs, 1);
  return cosine_lr(static_cast<std::size_t>(epoch), base_lr, period);
}

PretrainResult pretrain_source(ModelParams params, const DomainDataset& source,
                               const PretrainOptions& opts) {
  source.validate();
  if (!source.labeled()) throw std::invalid_argument("pretraining needs a labeled source");
  if (source.classes != params.dims.classes) {
    throw std::invalid_argument("source has " + std::to_string(source.classes) +
                                " classes, model has " + std::to_string(params.dims.classes));
  }
  if (opts.batch_size < 1 || opts.epochs < 0) {
    throw std::invalid_argument("pretrain: batch_size must be >= 1 and epochs >= 0");
  }
  Xoshiro256ss rng(opts.seed);
  const std::vector<int>& labels = source.labels();
  std::vector<std::size_t> order(source.size());
  std::vector<int> batch_labels;
  PretrainResult result;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr = scheduled_lr(opts.schedule, epoch, opts.epochs, opts.lr, opts.restart_period);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      batch_labels.clear();
      for (std::size_t i : idx) batch_labels.push_back(labels[i]);

      ad::Tape tape;
      ModelVars vars = bind(tape, params);
      ForwardVars out = forward(vars, tape.constant(select_rows(source.x, idx)));
      ad::Var loss = ad::cross_entropy(out.logits, batch_labels);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingDiverged("pretraining loss became non-finite at epoch " +
                               std::to_string(epoch + 1));
      }
      loss_sum += value * static_cast<double>(idx.size());
      tape.backward(loss);
      sgd_step(params, gradients(tape, vars, params), lr);
    }
    const auto n = static_cast<double>(order.size());
    result.log.push_back({epoch + 1, loss_sum / n, evaluate_accuracy(params, source), lr});
  }
  result.params = std::move(params);
  return result;
}

}  // namespace jfpd
