#pragma once

// Experiment orchestration behind the jfpd CLI: flat key=value configuration,
// run manifests, and the pretrain / adapt / ablate-alpha / diagnose commands.

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "jfpd/adapt.hpp"
#include "jfpd/data.hpp"
#include "jfpd/model.hpp"

namespace jfpd::harness {

/// Bad flags or configuration; the CLI maps it to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Every configurable key with its current value. Keys are fixed; setting an
/// unknown key is a UsageError.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  bool has_key(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  double real(const std::string& key) const;
  long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Applies key=value lines ('#' comments). Manifest files are accepted too:
/// their config.* entries are applied and bookkeeping keys ignored.
void merge_config_file(RunConfig& cfg, const std::filesystem::path& path);

struct Manifest {
  std::string command;
  RunConfig config;
  std::vector<std::string> outputs;
};

Manifest read_manifest(const std::filesystem::path& path);

/// Resolves the dataset named by the config: a generator or IDX files,
/// standardized with source statistics unless standardize=false.
DomainPair load_benchmark(const RunConfig& cfg, std::uint64_t seed, double rotation_deg);
ModelDims model_dims(const RunConfig& cfg, const DomainPair& data);
PretrainOptions pretrain_options(const RunConfig& cfg, std::uint64_t seed);
AdaptConfig adapt_config(const RunConfig& cfg, std::uint64_t seed);

/// Runs a command into out_dir (created if needed) and writes manifest.txt.
/// Returns the process exit code; progress goes to `log`.
int run_command(const std::string& command, const RunConfig& cfg,
                const std::filesystem::path& out_dir, std::ostream& log);

/// Re-runs the command recorded in a manifest into a new directory.
int replay(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
           std::ostream& log);

}  // namespace jfpd::harness
