#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jfpd/autodiff.hpp"
#include "jfpd/data.hpp"
#include "jfpd/tensor.hpp"

namespace jfpd {

struct ModelDims {
  int input_dim = 2;
  std::vector<int> hidden = {128, 64};
  int feature_dim = 32;
  int classes = 2;

  bool operator==(const ModelDims&) const = default;
  std::string str() const;
};

struct Layer {
  Tensor weight;  // fan_in x fan_out
  Tensor bias;    // 1 x fan_out

  bool operator==(const Layer&) const = default;
};

/// h(x) = softmax(head(f(x))). The backbone f is a stack of affine layers
/// with ReLU between them; its last layer output is the feature vector.
struct ModelParams {
  ModelDims dims;
  std::vector<Layer> backbone;
  Layer head;

  bool operator==(const ModelParams&) const = default;
  bool all_finite() const;
  std::size_t parameter_count() const;
  /// Every weight and bias in a fixed order: backbone layers, then head.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

/// Glorot-uniform weights, zero biases, deterministic per seed.
ModelParams init_model(const ModelDims& dims, std::uint64_t seed);

// No-gradient forward passes over a batch of rows.
Tensor forward_features(const ModelParams& params, const Tensor& x);
Tensor forward_logits(const ModelParams& params, const Tensor& x);
Tensor forward_predict(const ModelParams& params, const Tensor& x);
Tensor head_predict(const ModelParams& params, const Tensor& features);

/// Model parameters bound to a tape.
struct ModelVars {
  std::vector<std::pair<ad::Var, ad::Var>> backbone;
  std::pair<ad::Var, ad::Var> head;

  std::vector<ad::Var> all() const;
};

/// Registers every parameter as a tape variable (or a constant when !track).
ModelVars bind(ad::Tape& tape, const ModelParams& params, bool track = true);

struct ForwardVars {
  ad::Var features;
  ad::Var logits;
  ad::Var probs;
};

ForwardVars forward(const ModelVars& vars, ad::Var x);

/// Gradients of every bound parameter, shaped like params.
ModelParams gradients(const ad::Tape& tape, const ModelVars& vars, const ModelParams& like);

/// params -= lr * grad.
void sgd_step(ModelParams& params, const ModelParams& grad, double lr);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double evaluate_accuracy(const ModelParams& params, const DomainDataset& dataset);
double accuracy_from_probs(const Tensor& probs, const std::vector<int>& labels);
std::size_t argmax(std::span<const double> row);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "JFPD" magic, u32 version, dims, then little-endian f64 parameters in
/// tensors() order.
std::string serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);
/// Also rejects a checkpoint whose dims differ from expected.
ModelParams load_checkpoint(const std::filesystem::path& path, const ModelDims& expected);

/// base_lr * (1 + cos(pi * (step mod period) / period)) / 2: cosine decay
/// restarting every `period` steps.
double cosine_lr(std::size_t step, double base_lr, long period);

enum class LrSchedule { constant, cosine };

struct PretrainOptions {
  int epochs = 50;
  int batch_size = 64;
  double lr = 0.05;
  LrSchedule schedule = LrSchedule::cosine;
  /// Epochs per cosine cycle; 0 means one cycle over the whole run.
  int restart_period = 0;
  std::uint64_t seed = 1;
};

struct PretrainEpoch {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  ModelParams params;
  std::vector<PretrainEpoch> log;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mini-batch SGD on cross-entropy with a seeded per-epoch shuffle.
PretrainResult pretrain_source(ModelParams params, const DomainDataset& source,
                               const PretrainOptions& opts);

/// Learning rate for an epoch under the given schedule.
double scheduled_lr(LrSchedule schedule, int epoch, int epochs, double base_lr, int restart_period);

}  // namespace jfpd
