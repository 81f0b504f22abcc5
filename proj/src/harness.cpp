#include "jfpd/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <limits>
#include <sstream>

#include "jfpd/io.hpp"
#include "jfpd/objective.hpp"
#include "jfpd/plot.hpp"
#include "jfpd/prototype.hpp"
#include "jfpd/rng.hpp"

namespace jfpd::harness {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      // dataset
      {"gen", "gaussian"},
      {"classes", "4"},
      {"dim", "6"},
      {"n_per_class", "200"},
      {"radius", "3"},
      {"spread", "1"},
      {"invariant_radius", "2.5"},
      {"rotation", "60"},
      {"translation", "0"},
      {"scale", "1"},
      {"noise", "0"},
      {"moons_n", "400"},
      {"moons_noise", "0.1"},
      {"idx_images", ""},
      {"idx_labels", ""},
      {"target_idx_images", ""},
      {"target_idx_labels", ""},
      {"standardize", "true"},
      // model
      {"hidden", "128,64"},
      {"feature_dim", "32"},
      // source pretraining
      {"seed", "1"},
      {"pretrain_epochs", "30"},
      {"pretrain_lr", "0.05"},
      {"pretrain_batch_size", "64"},
      {"pretrain_schedule", "cosine"},
      {"pretrain_restart_period", "0"},
      // adaptation
      {"checkpoint", ""},
      {"epochs", "30"},
      {"lr", "0.05"},
      {"batch_size", "64"},
      {"schedule", "cosine"},
      {"restart_period", "0"},
      {"proto_k", "32"},
      {"alpha", "0.5"},
      {"mode", "jfpd"},
      {"no_trust", "false"},
      {"detach_trust", "true"},
      // sweeps
      {"alphas", "0,0.5,1"},
      {"seeds", "3"},
      {"rotations", "0,30,60,90,120,150"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_bookkeeping_key(const std::string& key) {
  return key == "command" || key == "started_at" || key == "finished_at" || key == "output" ||
         key == "format" || key.rfind("prng.", 0) == 0;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

LrSchedule parse_schedule(const std::string& s) {
  if (s == "cosine") return LrSchedule::cosine;
  if (s == "constant") return LrSchedule::constant;
  throw UsageError("unknown schedule '" + s + "' (expected cosine or constant)");
}

/// Bookkeeping for one command invocation.
class Run {
 public:
  Run(std::string command, const RunConfig& cfg, std::filesystem::path out_dir, std::ostream& log)
      : command_(std::move(command)), cfg_(cfg), out_dir_(std::move(out_dir)), log_(log),
        started_(utc_now()) {
    std::filesystem::create_directories(out_dir_);
  }

  const RunConfig& cfg() const { return cfg_; }
  std::ostream& log() { return log_; }

  std::filesystem::path output(const std::string& name) {
    outputs_.push_back(name);
    return out_dir_ / name;
  }

  void write_manifest() {
    std::ostringstream m;
    m << "format=jfpd-manifest-1\n";
    m << "command=" << command_ << "\n";
    for (const auto& [k, v] : cfg_.values()) m << "config." << k << "=" << v << "\n";
    const auto seed = static_cast<std::uint64_t>(cfg_.integer("seed"));
    m << "prng.seed=" << seed << "\n";
    const auto ref = reference_outputs(seed);
    m << "prng.reference=";
    for (std::size_t i = 0; i < ref.size(); ++i) m << (i ? "," : "") << hex64(ref[i]);
    m << "\n";
    m << "started_at=" << started_ << "\n";
    m << "finished_at=" << utc_now() << "\n";
    for (const auto& o : outputs_) m << "output=" << o << "\n";
    write_file_atomic(out_dir_ / "manifest.txt", m.str());
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  std::filesystem::path out_dir_;
  std::ostream& log_;
  std::string started_;
  std::vector<std::string> outputs_;
};

void write_key_values(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string text;
  for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
  write_file_atomic(path, text);
}

std::uint64_t seed_of(const RunConfig& cfg) { return static_cast<std::uint64_t>(cfg.integer("seed")); }

struct Pretrained {
  DomainPair data;
  ModelParams params;
  PretrainResult result;
};

ModelParams pretrain_for(const RunConfig& cfg, const DomainPair& data, std::uint64_t seed) {
  ModelParams init = init_model(model_dims(cfg, data), seed);
  return pretrain_source(std::move(init), data.source, pretrain_options(cfg, seed)).params;
}

/// Model to adapt for a given seed: the configured checkpoint, or a fresh
/// pretraining run on this seed's data.
ModelParams starting_model(const RunConfig& cfg, const DomainPair& data, std::uint64_t seed) {
  const std::string& ckpt = cfg.get("checkpoint");
  if (ckpt.empty()) return pretrain_for(cfg, data, seed);
  return load_checkpoint(ckpt, model_dims(cfg, data));
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_pretrain(Run& run) {
  const RunConfig& cfg = run.cfg();
  const std::uint64_t seed = seed_of(cfg);
  const DomainPair data = load_benchmark(cfg, seed, cfg.real("rotation"));
  PretrainResult res =
      pretrain_source(init_model(model_dims(cfg, data), seed), data.source, pretrain_options(cfg, seed));

  save_checkpoint(res.params, run.output("model.ckpt"));
  CsvTable log;
  log.header = {"epoch", "loss", "source_acc", "lr"};
  for (const auto& e : res.log) {
    log.rows.push_back({std::to_string(e.epoch), format_real(e.loss), format_real(e.accuracy),
                        format_real(e.lr)});
  }
  emit_csv(log, run.output("pretrain_log.csv"));

  const double src = evaluate_accuracy(res.params, data.source);
  std::vector<std::pair<std::string, std::string>> summary = {{"source_acc", format_real(src)}};
  if (data.target.labeled()) {
    summary.emplace_back("source_only_target_acc", format_real(evaluate_accuracy(res.params, data.target)));
  }
  write_key_values(run.output("summary.txt"), summary);
  run.log() << "pretrain: source accuracy " << src << "\n";
  return kExitOk;
}

int cmd_adapt(Run& run) {
  const RunConfig& cfg = run.cfg();
  const std::string& ckpt = cfg.get("checkpoint");
  if (ckpt.empty()) throw UsageError("adapt requires --checkpoint");
  if (!std::filesystem::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt);
  const std::uint64_t seed = seed_of(cfg);
  const DomainPair data = load_benchmark(cfg, seed, cfg.real("rotation"));
  const ModelParams start = load_checkpoint(cfg.get("checkpoint"), model_dims(cfg, data));
  const AdaptConfig ac = adapt_config(cfg, seed);

  const std::vector<int>* eval = data.target.labeled() ? &data.target.labels() : nullptr;
  // Labels are dropped from the target before it reaches the objective.
  const Tensor target_x = data.target.without_labels().x;
  AdaptResult res = adapt(start, data.source, target_x, ac, eval);

  save_checkpoint(res.params, run.output("adapted.ckpt"));
  emit_csv(trace_table(res.trace), run.output("trace.csv"));

  const TrustRemovalReport lemma = compare_trust_removal(
      start, target_x, compute_prototypes(start, data.source), ac.effective_jfpd().alpha);
  std::vector<std::pair<std::string, std::string>> summary = {
      {"mode", to_string(ac.mode)},
      {"alpha", format_real(ac.effective_jfpd().alpha)},
      {"no_trust", cfg.get("no_trust")},
      {"trust_removal_samples", std::to_string(lemma.samples)},
      {"trust_removal_violations", std::to_string(lemma.violations)},
      {"mean_total_weighted", format_real(lemma.mean_weighted)},
      {"mean_total_unweighted", format_real(lemma.mean_unweighted)},
  };
  if (eval) {
    summary.emplace_back("source_only_target_acc", format_real(accuracy_from_probs(forward_predict(start, target_x), *eval)));
    summary.emplace_back("final_target_acc", format_real(res.trace.epochs.empty()
                                                             ? accuracy_from_probs(forward_predict(res.params, target_x), *eval)
                                                             : res.trace.epochs.back().target_acc));
  }
  write_key_values(run.output("summary.txt"), summary);
  run.log() << "trust removal check: " << lemma.violations << " of " << lemma.samples
            << " samples have a weighted total above the unweighted one (mean "
            << lemma.mean_weighted << " <= " << lemma.mean_unweighted << ")\n";
  if (eval && !res.trace.epochs.empty()) {
    run.log() << "adapt " << to_string(ac.mode) << ": target accuracy "
              << res.trace.epochs.back().target_acc << "\n";
  }
  return kExitOk;
}

int cmd_ablate_alpha(Run& run) {
  const RunConfig& cfg = run.cfg();
  const std::vector<double> alphas = cfg.reals("alphas");
  if (alphas.empty()) throw UsageError("ablate-alpha needs a non-empty --alphas grid");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw UsageError("alpha grid values must lie in [0, 1]");
  }
  const long seeds = cfg.integer("seeds");
  if (seeds < 1) throw UsageError("seeds must be >= 1");

  CsvTable rows;
  rows.header = {"alpha", "seed", "target_acc", "mean_jfpd"};
  std::vector<std::vector<double>> acc(alphas.size());
  std::vector<std::vector<double>> gap(alphas.size());
  for (long s = 0; s < seeds; ++s) {
    const std::uint64_t seed = seed_of(cfg) + static_cast<std::uint64_t>(s);
    const DomainPair data = load_benchmark(cfg, seed, cfg.real("rotation"));
    if (!data.target.labeled()) throw UsageError("ablate-alpha needs target labels for evaluation");
    const ModelParams start = starting_model(cfg, data, seed);
    const Tensor target_x = data.target.without_labels().x;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      AdaptConfig ac = adapt_config(cfg, seed);
      ac.mode = AdaptMode::jfpd;
      ac.jfpd.alpha = alphas[i];
      AdaptResult res = adapt(start, data.source, target_x, ac, &data.target.labels());
      const double a = accuracy_from_probs(forward_predict(res.params, target_x), data.target.labels());
      const double g = res.trace.epochs.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : res.trace.epochs.back().mean_jfpd;
      acc[i].push_back(a);
      gap[i].push_back(g);
      rows.rows.push_back({format_real(alphas[i]), std::to_string(seed), format_real(a), format_real(g)});
      run.log() << "alpha " << alphas[i] << " seed " << seed << ": target accuracy " << a << "\n";
    }
  }
  emit_csv(rows, run.output("alpha_sweep.csv"));

  CsvTable med;
  med.header = {"alpha", "median_target_acc", "median_mean_jfpd"};
  std::vector<Point> points;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const double ma = median(acc[i]);
    med.rows.push_back({format_real(alphas[i]), format_real(ma), format_real(median(gap[i]))});
    points.push_back({alphas[i], ma});
  }
  emit_csv(med, run.output("alpha_median.csv"));
  emit_svg_scatter(points, {"Sensitivity to alpha", "alpha", "median target accuracy"},
                   run.output("alpha_sweep.svg"), true);
  return kExitOk;
}

int cmd_diagnose(Run& run) {
  const RunConfig& cfg = run.cfg();
  const std::vector<double> levels = cfg.reals("rotations");
  if (levels.size() < 3) throw UsageError("diagnose needs at least 3 shift levels in --rotations");
  if (cfg.get("gen").empty()) throw UsageError("diagnose needs a generator with a rotation axis");
  const long seeds = cfg.integer("seeds");
  if (seeds < 1) throw UsageError("seeds must be >= 1");

  std::vector<double> gaps(levels.size(), 0.0);
  std::vector<double> errors(levels.size(), 0.0);
  for (long s = 0; s < seeds; ++s) {
    const std::uint64_t seed = seed_of(cfg) + static_cast<std::uint64_t>(s);
    // The source side does not depend on the shift, so one pretrained model
    // serves every level of this seed.
    const DomainPair base = load_benchmark(cfg, seed, levels.front());
    const ModelParams start = starting_model(cfg, base, seed);
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const DomainPair data = load_benchmark(cfg, seed, levels[i]);
      const Tensor target_x = data.target.without_labels().x;
      AdaptConfig ac = adapt_config(cfg, seed);
      AdaptResult res = adapt(start, data.source, target_x, ac);
      const PrototypeSet protos = compute_prototypes(res.params, data.source);
      const double gap = mean_jfpd_diagnostic(res.params, target_x, protos, ac.effective_jfpd());
      const double err =
          1.0 - accuracy_from_probs(forward_predict(res.params, target_x), data.target.labels());
      gaps[i] += gap / static_cast<double>(seeds);
      errors[i] += err / static_cast<double>(seeds);
      run.log() << "shift " << levels[i] << " seed " << seed << ": mean JFPD " << gap
                << ", target error " << err << "\n";
    }
  }

  CsvTable table;
  table.header = {"shift", "mean_jfpd", "target_error"};
  std::vector<Point> points;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    table.rows.push_back({format_real(levels[i]), format_real(gaps[i]), format_real(errors[i])});
    points.push_back({gaps[i], errors[i]});
  }
  emit_csv(table, run.output("diagnose.csv"));
  emit_svg_scatter(points, {"Mean JFPD vs target error", "mean JFPD", "target error"},
                   run.output("diagnose.svg"));
  const double r = pearson(gaps, errors);
  if (std::isnan(r)) {
    run.log() << "warning: Pearson correlation undefined (a column has zero variance)\n";
  }
  write_key_values(run.output("summary.txt"), {{"levels", std::to_string(levels.size())},
                                                {"pearson_r", format_real(r)}});
  run.log() << "Pearson r(mean JFPD, target error) = " << r << "\n";
  return kExitOk;
}

}  // namespace

RunConfig::RunConfig() : values_(default_values()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown configuration key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown configuration key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("configuration key '" + key + "' expects a number, got '" + v + "'");
  }
}

long RunConfig::integer(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw UsageError("configuration key '" + key + "' expects an integer, got '" + v + "'");
  }
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no" || v.empty()) return false;
  throw UsageError("configuration key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("configuration key '" + key + "' has a non-numeric entry '" + item + "'");
    }
  }
  return out;
}

void merge_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw UsageError(std::string("cannot read config: ") + e.what());
  }
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("config.", 0) == 0) key = key.substr(7);
    if (is_bookkeeping_key(key)) continue;
    cfg.set(key, value);
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m;
  merge_config_file(m.config, path);
  std::stringstream ss(read_file(path));
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    if (key == "command") m.command = line.substr(eq + 1);
    if (key == "output") m.outputs.push_back(line.substr(eq + 1));
  }
  if (m.command.empty()) throw UsageError(path.string() + " has no command entry");
  return m;
}

DomainPair load_benchmark(const RunConfig& cfg, std::uint64_t seed, double rotation_deg) {
  DomainPair pair;
  const std::string& gen = cfg.get("gen");
  const std::string& images = cfg.get("idx_images");
  if (!images.empty()) {
    const std::string& labels = cfg.get("idx_labels");
    if (labels.empty()) throw UsageError("--idx-images needs --idx-labels");
    for (const auto& p : {images, labels}) {
      if (!std::filesystem::exists(p)) throw UsageError("dataset file not found: " + p);
    }
    pair.source = load_idx(images, labels);
    const std::string& t_images = cfg.get("target_idx_images");
    if (t_images.empty()) {
      pair.target = pair.source;
    } else {
      const std::string& t_labels = cfg.get("target_idx_labels");
      for (const auto& p : {t_images, t_labels}) {
        if (p.empty() || !std::filesystem::exists(p)) {
          throw UsageError("target dataset file not found: " + p);
        }
      }
      pair.target = load_idx(t_images, t_labels);
    }
    pair.source.domain = Domain::source;
    pair.target.domain = Domain::target;
    pair.target.classes = pair.source.classes = std::max(pair.source.classes, pair.target.classes);
    if (pair.source.dim() != pair.target.dim()) {
      throw UsageError("source and target IDX images have different sizes");
    }
  } else if (gen == "gaussian") {
    GaussianSpec spec;
    spec.classes = static_cast<int>(cfg.integer("classes"));
    spec.dim = static_cast<int>(cfg.integer("dim"));
    spec.n_per_class = static_cast<int>(cfg.integer("n_per_class"));
    spec.radius = cfg.real("radius");
    spec.spread = cfg.real("spread");
    spec.invariant_radius = cfg.real("invariant_radius");
    const Shift shift{rotation_deg, cfg.real("translation"), cfg.real("scale"), cfg.real("noise")};
    try {
      pair = gen_gaussian_domains(spec, shift, seed);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else if (gen == "moons") {
    try {
      pair = gen_two_moons_rotated(static_cast<int>(cfg.integer("moons_n")), rotation_deg,
                                   cfg.real("moons_noise"), seed);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else if (gen.empty()) {
    throw UsageError("no dataset given: use --gen gaussian|moons or --idx-images/--idx-labels");
  } else {
    throw UsageError("unknown generator '" + gen + "'");
  }
  return cfg.flag("standardize") ? standardize(pair) : pair;
}

ModelDims model_dims(const RunConfig& cfg, const DomainPair& data) {
  ModelDims dims;
  dims.input_dim = static_cast<int>(data.source.dim());
  dims.hidden.clear();
  for (double h : cfg.reals("hidden")) dims.hidden.push_back(static_cast<int>(h));
  dims.feature_dim = static_cast<int>(cfg.integer("feature_dim"));
  dims.classes = data.source.classes;
  return dims;
}

PretrainOptions pretrain_options(const RunConfig& cfg, std::uint64_t seed) {
  PretrainOptions o;
  o.epochs = static_cast<int>(cfg.integer("pretrain_epochs"));
  o.lr = cfg.real("pretrain_lr");
  o.batch_size = static_cast<int>(cfg.integer("pretrain_batch_size"));
  o.schedule = parse_schedule(cfg.get("pretrain_schedule"));
  o.restart_period = static_cast<int>(cfg.integer("pretrain_restart_period"));
  o.seed = seed;
  if (o.epochs < 0 || o.batch_size < 1 || !(o.lr >= 0.0)) {
    throw UsageError("invalid pretraining options");
  }
  return o;
}

AdaptConfig adapt_config(const RunConfig& cfg, std::uint64_t seed) {
  AdaptConfig a;
  a.epochs = static_cast<int>(cfg.integer("epochs"));
  a.lr = cfg.real("lr");
  a.batch_size = static_cast<int>(cfg.integer("batch_size"));
  a.schedule = parse_schedule(cfg.get("schedule"));
  a.restart_period = static_cast<int>(cfg.integer("restart_period"));
  a.seed = seed;
  const long k = cfg.integer("proto_k");
  if (k < 1) throw UsageError("proto_k must be >= 1");
  a.proto_k = static_cast<std::size_t>(k);
  try {
    a.mode = parse_adapt_mode(cfg.get("mode"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  a.jfpd.alpha = cfg.real("alpha");
  a.jfpd.use_trust = !cfg.flag("no_trust");
  a.jfpd.detach_trust = cfg.flag("detach_trust");
  try {
    a.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return a;
}

int run_command(const std::string& command, const RunConfig& cfg,
                const std::filesystem::path& out_dir, std::ostream& log) {
  using Handler = int (*)(Run&);
  Handler handler = nullptr;
  if (command == "pretrain") handler = cmd_pretrain;
  if (command == "adapt") handler = cmd_adapt;
  if (command == "ablate-alpha") handler = cmd_ablate_alpha;
  if (command == "diagnose") handler = cmd_diagnose;
  if (!handler) throw UsageError("unknown command '" + command + "'");
  Run run(command, cfg, out_dir, log);
  const int code = handler(run);
  run.write_manifest();
  return code;
}

int replay(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
           std::ostream& log) {
  const Manifest m = read_manifest(manifest);
  return run_command(m.command, m.config, out_dir, log);
}

}  // namespace jfpd::harness
