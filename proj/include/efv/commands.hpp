#pragma once

// Command implementations behind the `efv` tool. Each returns a process exit
// code: 0 success, 1 tolerance failure, 2 input error. Failures print one
// machine-readable line "error: kind=<Kind> message=<text>" to `err`.

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <unistd.h>

#include "efv/cache.hpp"
#include "efv/checkpoint.hpp"
#include "efv/config.hpp"
#include "efv/dataset.hpp"
#include "efv/gradcheck.hpp"
#include "efv/plot.hpp"
#include "efv/synthetic.hpp"
#include "json.hpp"

namespace efv {

inline constexpr std::string_view kToolVersion = "efv 1.0.0";

enum ExitCode : int { kExitOk = 0, kExitTolerance = 1, kExitInput = 2 };

struct CommandOptions {
  std::filesystem::path input;
  std::filesystem::path output;
  std::optional<std::string> format;
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> epochs;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::filesystem::path eval_input;
  std::filesystem::path confusion;
  // synth only
  std::string kind = "digits";
  std::size_t per_class = 10;
  bool quiet = false;
};

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

/// Hash of a file, or of a directory's regular files (relative path and
/// contents, in sorted order).
inline std::string sha256_path(const std::filesystem::path& p) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(p)) return sha256_hex(read_file_bytes(p));
  if (!fs::is_directory(p)) throw IoError("cannot hash missing path " + p.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  ByteWriter w;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, p).generic_string();
    w.u32(std::uint32_t(rel.size()));
    w.str(rel);
    w.str(sha256_hex(read_file_bytes(f)));
  }
  return sha256_hex(w.take());
}

/// Everything needed to reproduce a command's outputs.
class RunManifest {
 public:
  RunManifest(std::string command, const RunConfig& cfg) {
    doc_["tool_version"] = kToolVersion;
    doc_["command"] = std::move(command);
    doc_["seed"] = cfg.train.seed;
    doc_["config"] = config_to_ini(cfg);
    doc_["inputs"] = nlohmann::json::array();
    doc_["outputs"] = nlohmann::json::array();
  }
  void add_input(const std::filesystem::path& p) {
    doc_["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_path(p)}});
  }
  /// `shown` replaces the recorded path, e.g. to hide a staging directory.
  void add_output(const std::filesystem::path& p, const std::string& shown = {}) {
    doc_["outputs"].push_back({{"path", shown.empty() ? p.string() : shown}, {"sha256", sha256_path(p)}});
  }
  void set(const std::string& key, nlohmann::json v) { doc_[key] = std::move(v); }
  std::string dump() const { return doc_.dump(2) + "\n"; }
  void write(const std::filesystem::path& path) const { atomic_write(path, dump()); }

 private:
  nlohmann::json doc_;
};

namespace detail {

inline RunConfig resolve_config(const CommandOptions& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  if (o.mode) c.train.mode = parse_mode(*o.mode);
  if (o.epochs) c.train.epochs = *o.epochs;
  c.model.frames = c.data.frames;
  return c;
}

inline void require(const std::filesystem::path& p, const char* flag) {
  if (p.empty()) throw ConfigError(std::string("missing required flag ") + flag);
}

/// A sibling scratch directory that replaces `target` on commit().
class StagingDir {
 public:
  explicit StagingDir(std::filesystem::path target) : target_(std::move(target)) {
    auto name = target_.filename().string();
    if (name.empty()) name = target_.parent_path().filename().string();
    staging_ = target_.parent_path() / (name + ".tmp." + std::to_string(::getpid()));
    std::filesystem::remove_all(staging_);
    std::filesystem::create_directories(staging_);
  }
  ~StagingDir() {
    std::error_code ec;
    if (!committed_) std::filesystem::remove_all(staging_, ec);
  }
  const std::filesystem::path& path() const { return staging_; }
  void commit() {
    std::filesystem::remove_all(target_);
    std::filesystem::rename(staging_, target_);
    committed_ = true;
  }

 private:
  std::filesystem::path target_, staging_;
  bool committed_ = false;
};

}  // namespace detail

/// Cache directory (index.csv present) or raw class-directory dataset.
inline std::vector<Sample> load_samples(const std::filesystem::path& dir, const PreprocessConfig& cfg) {
  if (std::filesystem::exists(dir / "index.csv")) return load_cache_dir(dir);
  std::vector<Sample> out;
  for (const auto& e : scan_dataset(dir)) {
    EventStream s = read_event_file(e.path, cfg.sensor_width, cfg.sensor_height);
    s.label = e.label;
    out.push_back(preprocess(s, cfg));
  }
  return out;
}

inline int cmd_convert(const CommandOptions& o, std::ostream& out) {
  detail::require(o.input, "--input");
  detail::require(o.output, "--output");
  const RunConfig cfg = detail::resolve_config(o);
  const EventFormat to = o.format ? parse_format(*o.format)
                                  : (format_for_path(o.input) == EventFormat::Csv ? EventFormat::Nmnist
                                                                                  : EventFormat::Csv);
  const EventStream s = read_event_file(o.input, cfg.data.sensor_width, cfg.data.sensor_height);
  write_event_file(o.output, s, to);
  const std::uint64_t duration = s.events.empty() ? 0 : s.events.back().t - s.events.front().t;
  out << "events=" << s.events.size() << " duration_us=" << duration << '\n';
  return kExitOk;
}

/// Write a seeded synthetic dataset in the raw class-directory layout.
inline int cmd_synth(const CommandOptions& o, std::ostream& out) {
  detail::require(o.output, "--output");
  const std::uint64_t seed = o.seed.value_or(0);
  const EventFormat fmt = o.format ? parse_format(*o.format) : EventFormat::Nmnist;
  std::vector<EventStream> streams;
  if (o.kind == "digits") {
    streams = synthetic::make_balanced(10, o.per_class, seed,
                                       [](int c, std::uint64_t s) { return synthetic::saccade_digit(c, s); });
  } else if (o.kind == "splitcue") {
    streams = synthetic::make_balanced(synthetic::kSplitCueClasses, o.per_class, seed,
                                       [](int c, std::uint64_t s) { return synthetic::split_cue_sample(c, s); });
  } else {
    throw ConfigError("unknown synthetic kind '" + o.kind + "' (expected digits or splitcue)");
  }
  detail::StagingDir stage(o.output);
  std::vector<std::size_t> counter(10, 0);
  for (const auto& s : streams) {
    const int c = *s.label;
    const auto dir = stage.path() / std::to_string(c);
    std::filesystem::create_directories(dir);
    std::ostringstream name;
    name << std::setw(5) << std::setfill('0') << counter[std::size_t(c)]++
         << (fmt == EventFormat::Csv ? ".csv" : ".bin");
    write_event_file(dir / name.str(), s, fmt);
  }
  stage.commit();
  out << "samples=" << streams.size() << " kind=" << o.kind << '\n';
  return kExitOk;
}

inline int cmd_preprocess(const CommandOptions& o, std::ostream& out) {
  detail::require(o.input, "--input");
  detail::require(o.output, "--output");
  const RunConfig cfg = detail::resolve_config(o);
  const auto entries = scan_dataset(o.input);
  detail::StagingDir stage(o.output);
  RunManifest manifest("preprocess", cfg);
  manifest.add_input(o.input);
  if (!o.config.empty()) manifest.add_input(o.config);
  manifest.write(stage.path() / "manifest.json");

  std::filesystem::create_directories(stage.path() / "samples");
  std::vector<CacheIndexRow> rows;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    EventStream s = read_event_file(entries[i].path, cfg.data.sensor_width, cfg.data.sensor_height);
    s.label = entries[i].label;
    const Sample sample = preprocess(s, cfg.data);
    std::ostringstream name;
    name << "samples/" << std::setw(6) << std::setfill('0') << i << ".efvc";
    write_sample_file(stage.path() / name.str(), sample);
    rows.push_back({name.str(), entries[i].label,
                    std::filesystem::relative(entries[i].path, o.input).generic_string(), s.events.size()});
  }
  atomic_write(stage.path() / "index.csv", cache_index_csv(rows));
  manifest.set("samples", rows.size());
  manifest.add_output(stage.path() / "samples", "samples");
  manifest.write(stage.path() / "manifest.json");
  stage.commit();
  out << "samples=" << rows.size() << " output=" << o.output.string() << '\n';
  return kExitOk;
}

inline int cmd_train(const CommandOptions& o, std::ostream& out) {
  detail::require(o.input, "--input");
  const RunConfig cfg = detail::resolve_config(o);
  const std::filesystem::path run_dir = o.output.empty() ? std::filesystem::path(".") : o.output;
  std::filesystem::create_directories(run_dir);
  const auto ckpt = o.checkpoint.empty() ? run_dir / "model.efvw" : o.checkpoint;
  const auto log_path = o.metrics.empty() ? run_dir / "train_log.csv" : o.metrics;

  RunManifest manifest("train", cfg);
  manifest.add_input(o.input);
  if (!o.eval_input.empty()) manifest.add_input(o.eval_input);
  if (!o.config.empty()) manifest.add_input(o.config);
  manifest.write(run_dir / "manifest.json");

  const auto train = load_samples(o.input, cfg.data);
  const auto eval = o.eval_input.empty() ? std::vector<Sample>{} : load_samples(o.eval_input, cfg.data);
  for (const auto* set : {&train, &eval})
    for (const auto& s : *set)
      if (s.label < 0 || std::size_t(s.label) >= cfg.model.n_classes) {
        throw ConfigError("label " + std::to_string(s.label) + " outside n_classes=" +
                          std::to_string(cfg.model.n_classes));
      }

  EfvModel<float> model(cfg.model, cfg.train.mode, cfg.train.seed);
  Optimizer<float> opt(model.parameters(), cfg.train);
  std::string log = training_log_header();
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochLog e = train_epoch(model, opt, train, cfg.train, epoch);
    if (!eval.empty()) {
      const EvalResult r = evaluate(model, eval);
      e.eval_top1 = r.top1;
      e.eval_top5 = r.top5;
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log += training_log_row(e);
    atomic_write(log_path, log);
    if (!o.quiet) out << training_log_row(e) << std::flush;
  }
  save_checkpoint(model, ckpt, &opt);
  manifest.add_output(ckpt);
  manifest.add_output(log_path);
  manifest.write(run_dir / "manifest.json");
  out << "checkpoint=" << ckpt.string() << " metrics=" << log_path.string() << '\n';
  return kExitOk;
}

inline int cmd_eval(const CommandOptions& o, std::ostream& out) {
  detail::require(o.input, "--input");
  detail::require(o.checkpoint, "--checkpoint");
  const RunConfig cfg = detail::resolve_config(o);
  const auto model = load_checkpoint(o.checkpoint, cfg.model, cfg.train.mode, cfg.train.seed);
  const auto data = load_samples(o.input, cfg.data);
  if (data.empty()) throw EmptyStream("evaluation set is empty");
  const EvalResult r = evaluate(model, data);
  if (!o.metrics.empty()) atomic_write(o.metrics, confusion_csv(r));
  if (!o.output.empty()) {
    RunManifest manifest("eval", cfg);
    manifest.add_input(o.input);
    manifest.add_input(o.checkpoint);
    manifest.set("samples", data.size());
    manifest.set("top1", r.top1);
    manifest.set("top5", r.top5);
    manifest.write(o.output);
  }
  out << std::setprecision(6) << "samples=" << data.size() << " top1=" << r.top1 << " top5=" << r.top5 << '\n';
  return kExitOk;
}

/// The micro configuration used for full-model gradient checks.
inline EfvConfig micro_config() {
  EfvConfig c;
  c.frames = 4;
  c.grid_h = 2;
  c.grid_w = 2;
  c.width = 32;
  c.heads = 4;
  c.head_hidden = 32;
  c.stem_channels = {8, 16};
  c.gmm_widths = {16};
  c.gmm_kernels = 4;
  c.n_classes = 10;
  return c;
}

inline PreprocessConfig micro_preprocess() {
  PreprocessConfig p;
  p.frames = 4;
  p.frame_height = 16;
  p.frame_width = 16;
  p.top_k = 32;
  return p;
}

/// Two preprocessed synthetic digits shaped for micro_config().
inline std::vector<Sample> micro_batch(std::uint64_t seed) {
  std::vector<Sample> out;
  for (int i = 0; i < 2; ++i) {
    const int digit = int(Rng(derive_seed(seed, 100 + i)).below(10));
    out.push_back(preprocess(synthetic::saccade_digit(digit, derive_seed(seed, i)), micro_preprocess()));
  }
  return out;
}

struct ModelGradCheck {
  GradCheckReport report;
  std::size_t parameters = 0;
  double seconds = 0.0;
};

/// Finite-difference check of every parameter tensor of a seeded micro model
/// (64-bit) on a 2-sample batch.
inline ModelGradCheck model_gradcheck(std::uint64_t seed, Mode mode = Mode::Fused, std::size_t coords = 8,
                                      double delta = 1e-5) {
  const auto start = std::chrono::steady_clock::now();
  EfvModel<double> model(micro_config(), mode, seed);
  const auto batch = micro_batch(seed);
  std::vector<int> labels;
  for (const auto& s : batch) labels.push_back(s.label);
  auto loss = [&] {
    std::vector<Tensor<double>> rows;
    for (const auto& s : batch) rows.push_back(model.forward(s));
    return nll_loss(concat_rows(rows), std::span<const int>(labels));
  };
  GradCheckOptions opt;
  opt.delta = delta;
  opt.max_coords_per_tensor = coords;
  opt.seed = seed;
  ModelGradCheck r;
  r.report = grad_check(loss, model.parameters().items(), opt);
  r.parameters = model.parameters().count();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline constexpr double kGradTolerance = 1e-3;

inline int cmd_gradcheck(const CommandOptions& o, std::ostream& out) {
  const Mode mode = o.mode ? parse_mode(*o.mode) : Mode::Fused;
  const auto r = model_gradcheck(o.seed.value_or(0), mode);
  if (!o.quiet)
    for (const auto& e : r.report.entries)
      out << std::setprecision(3) << "  " << e.name << " rel_err=" << e.max_rel_error << '\n';
  const bool ok = r.report.max_rel_error < kGradTolerance;
  out << std::setprecision(6) << "gradcheck mode=" << mode_name(mode) << " parameters=" << r.parameters
      << " coords=" << r.report.coords_checked << " max_rel_error=" << r.report.max_rel_error
      << " worst=" << r.report.worst << " kink_retries=" << r.report.kink_retries
      << " kinks_unresolved=" << r.report.kinks_unresolved << " tolerance=" << kGradTolerance << (ok ? " PASS" : " FAIL") << '\n';
  return ok ? kExitOk : kExitTolerance;
}

inline int cmd_plot(const CommandOptions& o, std::ostream& out) {
  detail::require(o.input, "--input");
  detail::require(o.output, "--output");
  const auto log = parse_training_log(read_file_text(o.input));
  if (log.empty()) throw EmptyStream("training log " + o.input.string() + " has no epochs");
  std::optional<EvalResult> conf;
  if (!o.confusion.empty()) conf = parse_confusion_csv(read_file_text(o.confusion));
  std::filesystem::create_directories(o.output);
  std::string csv = training_log_header();
  for (const auto& e : log) csv += training_log_row(e);
  atomic_write(o.output / "curves.csv", csv);
  atomic_write(o.output / "curves.svg", curves_svg(log));
  if (conf) {
    atomic_write(o.output / "confusion.csv", confusion_csv(*conf));
    atomic_write(o.output / "confusion.svg", confusion_svg(*conf));
  }
  out << "epochs=" << log.size() << " output=" << o.output.string() << '\n';
  return kExitOk;
}

/// Dispatch by name and translate failures into exit codes.
inline int run_command(const std::string& name, const CommandOptions& o, std::ostream& out, std::ostream& err) {
  try {
    if (name == "convert") return cmd_convert(o, out);
    if (name == "synth") return cmd_synth(o, out);
    if (name == "preprocess") return cmd_preprocess(o, out);
    if (name == "train") return cmd_train(o, out);
    if (name == "eval") return cmd_eval(o, out);
    if (name == "gradcheck") return cmd_gradcheck(o, out);
    if (name == "plot") return cmd_plot(o, out);
    throw ConfigError("unknown command '" + name + "'");
  } catch (const Error& e) {
    err << "error: kind=" << e.kind() << " message=" << e.what() << '\n';
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: kind=IoError message=" << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: kind=Internal message=" << e.what() << '\n';
  }
  return kExitInput;
}

}  // namespace efv
