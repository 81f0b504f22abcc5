#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jfpd/data.hpp"
#include "jfpd/io.hpp"
#include "jfpd/model.hpp"
#include "jfpd/objective.hpp"
#include "jfpd/rng.hpp"

namespace jfpd {

/// What the adaptation step minimizes.
///   jfpd     - trust-aware objective at the configured alpha
///   fgpd     - prediction term only (alpha = 0)
///   pgfd     - feature term only (alpha = 1)
///   standard - cross-entropy on the model's own pseudo-labels
enum class AdaptMode { jfpd, fgpd, pgfd, standard };

std::string to_string(AdaptMode mode);
AdaptMode parse_adapt_mode(const std::string& text);

struct AdaptConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 0.01;
  LrSchedule schedule = LrSchedule::cosine;
  int restart_period = 0;
  std::uint64_t seed = 1;
  std::size_t proto_k = 32;
  AdaptMode mode = AdaptMode::jfpd;
  JfpdConfig jfpd;
  /// Print a progress line every log_every epochs; 0 disables.
  int log_every = 0;

  void validate() const;
  /// The objective configuration actually minimized under `mode`.
  JfpdConfig effective_jfpd() const;
};

struct AdaptEpochRecord {
  int epoch = 0;
  double mean_jfpd = 0.0;
  double mean_pgfd = 0.0;
  double mean_fgpd = 0.0;
  double mean_psi = 0.0;
  double mean_phi = 0.0;
  std::size_t skipped = 0;
  /// NaN when no evaluation labels were supplied.
  double target_acc = 0.0;
  double lr = 0.0;
  std::size_t trust_evaluations = 0;
  std::size_t steps = 0;
};

struct AdaptTrace {
  std::vector<AdaptEpochRecord> epochs;
};

struct AdaptResult {
  ModelParams params;
  AdaptTrace trace;
};

/// One pass over the target: seeded shuffle, then per mini-batch fresh
/// source prototypes, objective, backward and an SGD step at `lr`. Target
/// labels never enter here; `eval_labels` only feeds the record's accuracy.
AdaptEpochRecord adapt_epoch(ModelParams& params, const DomainDataset& source,
                             const Tensor& target_x, const AdaptConfig& cfg, double lr,
                             Xoshiro256ss& rng, const std::vector<int>* eval_labels = nullptr);

AdaptResult adapt(ModelParams params, const DomainDataset& source, const Tensor& target_x,
                  const AdaptConfig& cfg, const std::vector<int>* eval_labels = nullptr);

/// CSV header: epoch,mean_jfpd,mean_pgfd,mean_fgpd,mean_psi,mean_phi,skipped,target_acc
CsvTable trace_table(const AdaptTrace& trace);

}  // namespace jfpd
