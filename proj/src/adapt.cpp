#include "jfpd/adapt.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "jfpd/io.hpp"

namespace jfpd {

std::string to_string(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::jfpd: return "jfpd";
    case AdaptMode::fgpd: return "fgpd";
    case AdaptMode::pgfd: return "pgfd";
    case AdaptMode::standard: return "standard";
  }
  return "jfpd";
}

AdaptMode parse_adapt_mode(const std::string& text) {
  if (text == "jfpd") return AdaptMode::jfpd;
  if (text == "fgpd") return AdaptMode::fgpd;
  if (text == "pgfd") return AdaptMode::pgfd;
  if (text == "standard") return AdaptMode::standard;
  throw std::invalid_argument("unknown adaptation mode '" + text + "'");
}

void AdaptConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("adapt: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("adapt: batch_size must be >= 1");
  if (!(lr >= 0.0)) throw std::invalid_argument("adapt: lr must be >= 0");
  if (proto_k < 1) throw std::invalid_argument("adapt: proto_k must be >= 1");
  jfpd.validate();
}

JfpdConfig AdaptConfig::effective_jfpd() const {
  JfpdConfig out = jfpd;
  if (mode == AdaptMode::fgpd) out.alpha = 0.0;
  if (mode == AdaptMode::pgfd) out.alpha = 1.0;
  return out;
}

AdaptEpochRecord adapt_epoch(ModelParams& params, const DomainDataset& source,
                             const Tensor& target_x, const AdaptConfig& cfg, double lr,
                             Xoshiro256ss& rng, const std::vector<int>* eval_labels) {
  cfg.validate();
  if (target_x.rows() == 0) throw std::invalid_argument("adapt: empty target set");
  const JfpdConfig objective = cfg.effective_jfpd();

  std::vector<std::size_t> order(target_x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  AdaptEpochRecord rec;
  rec.lr = lr;
  std::size_t kept_total = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    std::span<const std::size_t> idx(order.data() + start, end - start);

    const PrototypeSet protos = sample_minibatch_prototypes(params, source, cfg.proto_k, rng);
    ad::Tape tape;
    ModelVars vars = bind(tape, params);
    ForwardVars out = forward(vars, tape.constant(select_rows(target_x, idx)));

    ad::Var loss;
    BatchEvaluation eval;
    bool have_eval = true;
    if (cfg.mode == AdaptMode::standard) {
      loss = pseudo_label_cross_entropy(out);
      // The discrepancy is still measured so traces are comparable across modes.
      try {
        eval = evaluate_batch(out.features.value(), out.probs.value(), protos, objective);
      } catch (const EmptyBatch&) {
        have_eval = false;
        rec.skipped += idx.size();
      }
    } else {
      try {
        BatchLoss b = batch_loss(out, protos, objective);
        loss = b.loss;
        eval = std::move(b.eval);
      } catch (const EmptyBatch&) {
        rec.skipped += idx.size();
        continue;
      }
    }

    if (have_eval) {
      const auto n = static_cast<double>(eval.kept.size());
      rec.mean_jfpd += eval.mean.total * n;
      rec.mean_pgfd += eval.mean.pgfd * n;
      rec.mean_fgpd += eval.mean.fgpd * n;
      rec.mean_psi += eval.mean.psi * n;
      rec.mean_phi += eval.mean.phi * n;
      rec.skipped += eval.skipped;
      rec.trust_evaluations += eval.trust_evaluations;
      kept_total += eval.kept.size();
    }

    if (!std::isfinite(loss.value().item())) {
      throw TrainingDiverged("adaptation loss became non-finite at step " +
                             std::to_string(rec.steps + 1) +
                             "; parameters from the previous step are the last good state");
    }
    tape.backward(loss);
    sgd_step(params, gradients(tape, vars, params), lr);
    ++rec.steps;
  }

  if (kept_total > 0) {
    const auto n = static_cast<double>(kept_total);
    rec.mean_jfpd /= n;
    rec.mean_pgfd /= n;
    rec.mean_fgpd /= n;
    rec.mean_psi /= n;
    rec.mean_phi /= n;
  }
  // The ablated term is not part of the single-term objectives.
  if (cfg.mode == AdaptMode::pgfd) rec.mean_fgpd = 0.0;
  if (cfg.mode == AdaptMode::fgpd) rec.mean_pgfd = 0.0;
  rec.target_acc = eval_labels ? accuracy_from_probs(forward_predict(params, target_x), *eval_labels)
                               : std::numeric_limits<double>::quiet_NaN();
  return rec;
}

AdaptResult adapt(ModelParams params, const DomainDataset& source, const Tensor& target_x,
                  const AdaptConfig& cfg, const std::vector<int>* eval_labels) {
  cfg.validate();
  source.validate();
  if (target_x.cols() != static_cast<std::size_t>(params.dims.input_dim)) {
    throw DimensionError("target dim " + std::to_string(target_x.cols()) +
                         " does not match model input dim " +
                         std::to_string(params.dims.input_dim));
  }
  Xoshiro256ss rng(cfg.seed);
  AdaptResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg.schedule, epoch, cfg.epochs, cfg.lr, cfg.restart_period);
    AdaptEpochRecord rec = adapt_epoch(params, source, target_x, cfg, lr, rng, eval_labels);
    rec.epoch = epoch + 1;
    if (cfg.log_every > 0 && rec.epoch % cfg.log_every == 0) {
      std::cerr << "[adapt " << to_string(cfg.mode) << "] epoch " << rec.epoch
                << " jfpd=" << rec.mean_jfpd << " acc=" << rec.target_acc << "\n";
    }
    result.trace.epochs.push_back(rec);
  }
  result.params = std::move(params);
  return result;
}

CsvTable trace_table(const AdaptTrace& trace) {
  CsvTable t;
  t.header = {"epoch",    "mean_jfpd", "mean_pgfd", "mean_fgpd",
              "mean_psi", "mean_phi",  "skipped",   "target_acc"};
  for (const auto& r : trace.epochs) {
    t.rows.push_back({std::to_string(r.epoch), format_real(r.mean_jfpd), format_real(r.mean_pgfd),
                      format_real(r.mean_fgpd), format_real(r.mean_psi), format_real(r.mean_phi),
                      std::to_string(r.skipped), format_real(r.target_acc)});
  }
  return t;
}

}  // namespace jfpd
