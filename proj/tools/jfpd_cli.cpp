// jfpd: pretrain, adapt, ablate-alpha, diagnose and replay from the command line.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jfpd/harness.hpp"

namespace h = jfpd::harness;

namespace {

struct Flags {
  std::string config;
  std::string out_dir;
  std::vector<std::string> sets;
  std::optional<long> seed;
  std::optional<std::string> gen, idx_images, idx_labels, mode, checkpoint, alphas, rotations;
  std::optional<double> alpha, lr;
  std::optional<long> epochs, batch_size, proto_k, seeds;
  bool no_trust = false;
};

void add_common(CLI::App* sub, Flags& f, bool training) {
  sub->add_option("--config", f.config, "key=value config file (or a manifest)");
  sub->add_option("--out-dir", f.out_dir, "output directory (default $JFPD_OUT_DIR/<command>)");
  sub->add_option("--seed", f.seed, "root seed");
  sub->add_option("--gen", f.gen, "synthetic generator: gaussian | moons");
  sub->add_option("--idx-images", f.idx_images, "IDX image file for the source domain");
  sub->add_option("--idx-labels", f.idx_labels, "IDX label file for the source domain");
  sub->add_option("--epochs", f.epochs, "training epochs");
  sub->add_option("--lr", f.lr, "base learning rate");
  sub->add_option("--batch-size", f.batch_size, "mini-batch size");
  sub->add_option("--set", f.sets, "extra key=value override (repeatable)");
  if (!training) {
    sub->add_option("--checkpoint", f.checkpoint, "pretrained checkpoint");
    sub->add_option("--mode", f.mode, "jfpd | fgpd | pgfd | standard");
    sub->add_option("--alpha", f.alpha, "feature/prediction balance in [0, 1]");
    sub->add_flag("--no-trust", f.no_trust, "force psi = phi = 1");
    sub->add_option("--proto-k", f.proto_k, "source samples per class for prototypes");
    sub->add_option("--seeds", f.seeds, "number of consecutive seeds for sweeps");
  }
}

template <typename T>
void put(h::RunConfig& cfg, const char* key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, std::string>) {
    cfg.set(key, *v);
  } else {
    std::ostringstream ss;
    ss.precision(17);
    ss << *v;
    cfg.set(key, ss.str());
  }
}

h::RunConfig build_config(const std::string& command, const Flags& f) {
  h::RunConfig cfg;
  if (!f.config.empty()) h::merge_config_file(cfg, f.config);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw h::UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  put(cfg, "seed", f.seed);
  put(cfg, "gen", f.gen);
  if (f.idx_images) {
    put(cfg, "idx_images", f.idx_images);
    if (!f.gen) cfg.set("gen", "");
  }
  put(cfg, "idx_labels", f.idx_labels);
  const bool pre = command == "pretrain";
  put(cfg, pre ? "pretrain_epochs" : "epochs", f.epochs);
  put(cfg, pre ? "pretrain_lr" : "lr", f.lr);
  put(cfg, pre ? "pretrain_batch_size" : "batch_size", f.batch_size);
  put(cfg, "checkpoint", f.checkpoint);
  put(cfg, "mode", f.mode);
  put(cfg, "alpha", f.alpha);
  put(cfg, "proto_k", f.proto_k);
  put(cfg, "seeds", f.seeds);
  put(cfg, "alphas", f.alphas);
  put(cfg, "rotations", f.rotations);
  if (f.no_trust) cfg.set("no_trust", "true");
  return cfg;
}

std::filesystem::path output_dir(const std::string& command, const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* root = std::getenv("JFPD_OUT_DIR");
  return std::filesystem::path(root && *root ? root : "runs") / command;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trust-aware joint feature-prediction discrepancy for domain adaptation"};
  app.require_subcommand(1);

  Flags f;
  auto* pretrain = app.add_subcommand("pretrain", "train on the labeled source domain");
  add_common(pretrain, f, true);
  auto* adapt = app.add_subcommand("adapt", "adapt a checkpoint to the unlabeled target domain");
  add_common(adapt, f, false);
  auto* ablate = app.add_subcommand("ablate-alpha", "sweep the balance parameter alpha");
  add_common(ablate, f, false);
  ablate->add_option("--alphas", f.alphas, "comma-separated alpha grid");
  auto* diagnose = app.add_subcommand("diagnose", "mean JFPD against target error over shifts");
  add_common(diagnose, f, false);
  diagnose->add_option("--rotations", f.rotations, "comma-separated rotation levels in degrees");

  std::string manifest;
  auto* replay = app.add_subcommand("replay", "re-run a recorded manifest");
  replay->add_option("manifest", manifest, "manifest.txt of an earlier run")->required();
  replay->add_option("--out-dir", f.out_dir, "output directory (default $JFPD_OUT_DIR/replay)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return h::kExitUsage;
  }

  try {
    if (replay->parsed()) {
      if (!std::filesystem::exists(manifest)) throw h::UsageError("manifest not found: " + manifest);
      return h::replay(manifest, output_dir("replay", f.out_dir), std::cout);
    }
    const std::string command = app.get_subcommands().front()->get_name();
    const h::RunConfig cfg = build_config(command, f);
    return h::run_command(command, cfg, output_dir(command, f.out_dir), std::cout);
  } catch (const h::UsageError& e) {
    std::cerr << "jfpd: " << e.what() << "\n";
    return h::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "jfpd: error: " << e.what() << "\n";
    return h::kExitFailure;
  }
}
