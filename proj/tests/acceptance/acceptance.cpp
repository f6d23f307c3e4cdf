// Acceptance gate: one PASS/FAIL line per criterion, exit 0 only if all pass.
// Usage: efv_acceptance [criterion numbers...]   (default: all)
// EFV_NMNIST_DIR=<dir with Train/ and Test/> switches C5/C6 to real N-MNIST.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "efv/commands.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace efv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

/// Collects failures; the first few are kept for the report line.
struct Tally {
  std::size_t checks = 0, failures = 0;
  std::string first;
  void expect(bool ok, const std::string& what) {
    ++checks;
    if (ok) return;
    if (failures++ < 3) first += (first.empty() ? "" : "; ") + what;
  }
  Outcome outcome(const std::string& summary) const {
    return {failures == 0, summary + " checks=" + std::to_string(checks) + " failures=" + std::to_string(failures) +
                               (first.empty() ? "" : " first: " + first)};
  }
};

// ---------------------------------------------------------------- C1

Outcome c1_gradients() {
  // Linear + NLL path, every coordinate.
  Rng rng(1);
  ParameterList<double> reg;
  auto lin = LinearParams<double>::make(reg, "lin", 12, 10, rng);
  std::vector<double> xv(3 * 12);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  const auto x = Tensor<double>::constant({3, 12}, xv);
  const std::vector<int> targets{1, 7, 3};
  GradCheckOptions lo;
  lo.delta = 1e-4;
  const auto lr = grad_check([&] { return nll_loss(log_softmax(lin(x)), std::span<const int>(targets)); },
                             reg.items(), lo);

  const auto m = model_gradcheck(0, Mode::Fused, 512, 1e-5);
  // The output layer feeds log-softmax/NLL directly: a linear/NLL-only path.
  double head_out = 0;
  for (const auto& e : m.report.entries)
    if (e.name.rfind("head.out.", 0) == 0) head_out = std::max(head_out, e.max_rel_error);

  const bool ok = m.report.max_rel_error < 1e-3 && lr.max_rel_error < 1e-6 && head_out < 1e-6 && m.seconds < 300.0 &&
                  m.report.kinks_unresolved == 0;
  return {ok, "model params=" + std::to_string(m.parameters) + " coords=" + std::to_string(m.report.coords_checked) +
                  " max_rel=" + fmt(m.report.max_rel_error) + " (" + m.report.worst + ") kink_retries=" +
                  std::to_string(m.report.kink_retries) + " unresolved=" + std::to_string(m.report.kinks_unresolved) +
                  " linear_nll=" + fmt(lr.max_rel_error) + " head_out=" + fmt(head_out) +
                  " seconds=" + fmt(m.seconds)};
}

// ---------------------------------------------------------------- C2

Outcome c2_preprocessing() {
  Rng rng(2024);
  Tally t;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(5000);
    const EventStream s = test::random_stream(rng, n, 34, 34, 1 + rng.below(3'000'000));
    const bool defaults = trial < 10;
    const std::size_t T = defaults ? 8 : 1 + rng.below(8);
    const std::size_t H = defaults ? 34 : 4 + rng.below(31), W = defaults ? 34 : 4 + rng.below(31);
    const std::string id = "stream " + std::to_string(trial);

    const auto counts = accumulate_frame_counts(s, T, H, W);
    t.expect(counts == oracle::frame_counts(s, T, H, W), id + " frame counts");
    const FrameStack fs = stack_frames(s, T, H, W);
    const auto fv = oracle::frame_values(s, T, H, W);
    double frame_err = 0;
    for (std::size_t i = 0; i < fv.size(); ++i) frame_err = std::max(frame_err, std::abs(double(fs.data[i]) - fv[i]));
    t.expect(fs.data.size() == fv.size() && frame_err <= 1e-7, id + " frame values err=" + fmt(frame_err));

    const VoxelCell cell = defaults ? VoxelCell{}
                                    : VoxelCell{std::uint32_t(1 + rng.below(6)), std::uint32_t(1 + rng.below(6)),
                                                0.5 + rng.uniform() * 6};
    const VoxelSet vs = voxelize(s, cell, 32.0);
    const auto want = oracle::voxels(s, cell, 32.0);
    bool keys_ok = vs.size() == want.size();
    double feat_err = 0;
    for (std::size_t i = 0; keys_ok && i < want.size(); ++i) {
      const Voxel& v = vs.voxels[i];
      keys_ok = std::make_tuple(v.t, v.y, v.x) == want[i].key && v.event_count == want[i].count;
      for (std::size_t f = 0; f < 4; ++f) feat_err = std::max(feat_err, std::abs(double(v.feature[f]) - want[i].feature[f]));
    }
    t.expect(keys_ok, id + " voxel keys/counts");
    t.expect(feat_err <= 1e-7, id + " voxel features err=" + fmt(feat_err));

    const std::size_t k = defaults ? 512 : 1 + rng.below(std::max<std::size_t>(vs.size() + 8, 1));
    const VoxelSet top = select_top_k(vs, k);
    std::set<oracle::CellKey> got;
    bool ordered = true;
    for (std::size_t i = 0; i < top.size(); ++i) {
      const auto& v = top.voxels[i];
      got.insert({v.t, v.y, v.x});
      if (i && std::make_tuple(top.voxels[i - 1].t, top.voxels[i - 1].y, top.voxels[i - 1].x) >=
                   std::make_tuple(v.t, v.y, v.x))
        ordered = false;
    }
    t.expect(got == oracle::top_k_keys(want, k) && top.size() == std::min(k, want.size()), id + " top-k membership");
    t.expect(ordered, id + " top-k order");
  }

  for (int trial = 0; trial < 30; ++trial) {
    VoxelSet vs;
    std::set<oracle::CellKey> used;
    const std::uint32_t extent = 6 + std::uint32_t(rng.below(10));  // 6*6*8 > 200 cells
    while (vs.size() < 200) {
      Voxel v{std::uint32_t(rng.below(extent)), std::uint32_t(rng.below(extent)), std::uint32_t(rng.below(8)), 1, {}};
      if (used.insert({v.t, v.y, v.x}).second) vs.voxels.push_back(v);
    }
    const double R = trial < 10 ? 2.0 : 0.5 + rng.uniform() * 4;
    auto edges = build_radius_graph(vs, R).edges;
    std::sort(edges.begin(), edges.end());
    t.expect(edges == oracle::radius_edges(vs, R), "radius graph trial " + std::to_string(trial));
  }
  return t.outcome("streams=100 graphs=30");
}

// ---------------------------------------------------------------- C3

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a.values()[i]) - double(b.values()[i])));
  return m;
}

Outcome c3_structure() {
  Rng rng(3);
  Tally t;
  double id32 = 0, id64 = 0;
  for (std::size_t S : {1u, 5u, 33u}) {
    for (int prec = 0; prec < 2; ++prec) {
      auto run = [&]<typename T>(T) {
        ParameterList<T> reg;
        auto p = AttentionBlockParams<T>::make(reg, "b", 32, 4, rng);
        p.zero_interior();
        std::vector<T> xv(S * 32);
        for (auto& v : xv) v = T(rng.uniform(-3, 3));
        const auto x = Tensor<T>::constant({S, 32}, xv);
        return max_abs_diff(transformer_block(x, p), x);
      };
      if (prec == 0) id32 = std::max(id32, run(float{}));
      else id64 = std::max(id64, run(double{}));
    }
  }
  t.expect(id32 < 1e-6, "block identity f32 dev=" + fmt(id32));
  t.expect(id64 == 0.0, "block identity f64 dev=" + fmt(id64));

  // Whole model with zeroed interiors and with zero-depth stages.
  const Sample s = preprocess(synthetic::saccade_digit(3, 11), PreprocessConfig{});
  double model_dev = 0;
  {
    EfvModel<float> m(EfvConfig{}, Mode::Fused, 4);
    for (auto* blocks : {&m.st_blocks(), &m.fusion_one_blocks(), &m.fusion_two_blocks()})
      for (auto& b : *blocks) b.zero_interior();
    const auto tr = m.trace(s);
    model_dev = std::max({max_abs_diff(tr.image, tr.tokens), max_abs_diff(tr.fused_image, tr.image),
                          max_abs_diff(tr.fused_bottleneck, m.bottleneck()),
                          max_abs_diff(tr.stage_two, concat_rows<float>({m.bottleneck(), tr.voxel}))});
  }
  t.expect(model_dev < 1e-6, "model zero interiors dev=" + fmt(model_dev));
  double depth0 = 0;
  {
    EfvConfig cfg;
    cfg.st_depth = 0;
    cfg.fusion_depth = 0;
    EfvModel<double> m(cfg, Mode::Fused, 4);
    const auto tr = m.trace(s);
    depth0 = std::max({max_abs_diff(tr.image, tr.tokens), max_abs_diff(tr.fused_image, tr.image),
                       max_abs_diff(tr.fused_bottleneck, m.bottleneck()),
                       max_abs_diff(tr.stage_two, concat_rows<double>({m.bottleneck(), tr.voxel}))});
  }
  t.expect(depth0 == 0.0, "L=0 stages dev=" + fmt(depth0));

  double row_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ParameterList<float> reg;
    auto p = AttentionBlockParams<float>::make(reg, "b", 32, 4, rng);
    const std::size_t S = 1 + rng.below(65);
    std::vector<float> xv(S * 32);
    for (auto& v : xv) v = float(rng.uniform(-4, 4));
    std::vector<float> w;
    multi_head_self_attention(Tensor<float>::constant({S, 32}, xv), p, &w);
    for (std::size_t r = 0; r < 4 * S; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < S; ++c) sum += w[r * S + c];
      row_err = std::max(row_err, std::abs(sum - 1.0));
    }
  }
  t.expect(row_err < 1e-6, "attention rows err=" + fmt(row_err));

  double pool_dev = 0, branch_dev = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.below(200);
    std::vector<float> f(n * 16);
    for (auto& v : f) v = float(rng.uniform(-5, 5));
    const auto ref = avg_pool(Tensor<float>::constant({n, 16}, f));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<float> g(f.size());
    for (std::size_t i = 0; i < n; ++i) std::copy_n(&f[perm[i] * 16], 16, &g[i * 16]);
    pool_dev = std::max(pool_dev, max_abs_diff(avg_pool(Tensor<float>::constant({n, 16}, g)), ref));

    ParameterList<float> reg;
    auto br = VoxelBranch<float>::make(reg, "voxel", {64}, 64, 8, 2.0, rng);
    VoxelSet vs = select_top_k(voxelize(test::random_stream(rng, 4000), VoxelCell{}, 32.0), 512);
    const auto out = br(vs);
    for (int k = 0; k < 3; ++k) {
      rng.shuffle(vs.voxels);
      branch_dev = std::max(branch_dev, max_abs_diff(br(vs), out));
    }
  }
  t.expect(pool_dev < 1e-6, "avg_pool permutation dev=" + fmt(pool_dev));
  t.expect(branch_dev < 1e-6, "voxel_branch permutation dev=" + fmt(branch_dev));
  return t.outcome("block_f32=" + fmt(id32) + " block_f64=" + fmt(id64) + " model=" + fmt(model_dev) +
                   " rows=" + fmt(row_err) + " pool=" + fmt(pool_dev) + " branch=" + fmt(branch_dev));
}

// ---------------------------------------------------------------- C4

Outcome c4_anchors() {
  const auto lp = log_softmax(Tensor<double>::zeros({1, 10}));
  const int target = 4;
  const double nll = nll_loss(lp, std::span<const int>(&target, 1)).item();
  const double err = std::abs(nll - std::log(10.0));
  const TrainConfig c;
  const double l0 = lr_schedule(0, c), l60 = lr_schedule(60, c), l120 = lr_schedule(120, c);
  const bool ok = err <= 1e-9 && l0 == 1e-3 && l60 == 1e-4 && l120 == 1e-5;
  return {ok, "nll=" + fmt(nll, 17) + " err=" + fmt(err) + " lr(0)=" + fmt(l0, 17) + " lr(60)=" + fmt(l60, 17) +
                  " lr(120)=" + fmt(l120, 17)};
}

// ---------------------------------------------------------------- data

const char* nmnist_dir() {
  const char* d = std::getenv("EFV_NMNIST_DIR");
  return d && *d ? d : nullptr;
}

/// `n` samples, class-balanced; N-MNIST when available (seeded sampling of
/// `split`), otherwise synthetic saccade digits.
std::vector<Sample> digit_set(std::size_t n, std::uint64_t seed, const std::string& split,
                              const PreprocessConfig& cfg) {
  std::vector<Sample> out;
  if (const char* root = nmnist_dir()) {
    auto entries = scan_dataset(fs::path(root) / split);
    Rng rng(seed);
    rng.shuffle(entries);
    entries.resize(std::min(n, entries.size()));
    for (const auto& e : entries) {
      EventStream s = read_event_file(e.path, cfg.sensor_width, cfg.sensor_height);
      s.label = e.label;
      out.push_back(preprocess(s, cfg));
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    EventStream s = synthetic::saccade_digit(int(i % 10), derive_seed(seed, i));
    out.push_back(preprocess(s, cfg));
  }
  return out;
}

std::string source_name() { return nmnist_dir() ? "nmnist" : "synthetic"; }

// ---------------------------------------------------------------- C5

Outcome c5_overfit() {
  const auto t0 = Clock::now();
  const RunConfig cfg;  // default desk configuration
  const auto data = digit_set(32, 5, "Train", cfg.data);
  EfvModel<float> model(cfg.model, Mode::Fused, 5);
  TrainConfig tc = cfg.train;
  tc.seed = 5;
  Optimizer<float> opt(model.parameters(), tc);
  std::size_t epochs = 0;
  double top1 = 0, loss = 0;
  for (std::size_t e = 0; e < 200 && since(t0) < 600.0; ++e) {
    const auto log = train_epoch(model, opt, data, tc, e);
    epochs = e + 1;
    loss = log.train_loss;
    if (log.train_top1 == 1.0) {
      top1 = evaluate(model, data).top1;
      if (top1 == 1.0) break;
    }
  }
  if (top1 < 1.0) top1 = evaluate(model, data).top1;
  const double secs = since(t0);
  return {top1 == 1.0 && secs < 600.0,
          "data=" + source_name() + " params=" + std::to_string(model.parameters().count()) +
              " epochs=" + std::to_string(epochs) + " train_top1=" + fmt(top1) + " loss=" + fmt(loss) +
              " seconds=" + fmt(secs)};
}

// ---------------------------------------------------------------- C6

/// Reduced configuration for the 2000-sample run; fits the 30-minute budget.
RunConfig desk_config() {
  RunConfig c;
  c.data.top_k = 128;
  c.model.width = 32;
  c.model.heads = 4;
  c.model.head_hidden = 64;
  c.model.stem_channels = {8, 16};
  c.model.gmm_widths = {32};
  c.model.gmm_kernels = 4;
  c.train.batch_size = 16;
  c.train.epochs = 6;
  c.train.seed = 6;
  return c;
}

Outcome c6_generalization() {
  const auto t0 = Clock::now();
  const RunConfig cfg = desk_config();
  const auto train = digit_set(2000, 61, "Train", cfg.data);
  const auto test = digit_set(500, 62, "Test", cfg.data);
  EfvModel<float> model(cfg.model, Mode::Fused, cfg.train.seed);
  Optimizer<float> opt(model.parameters(), cfg.train);
  std::string curve;
  EvalResult r;
  for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
    const auto log = train_epoch(model, opt, train, cfg.train, e);
    r = evaluate(model, test);
    curve += (curve.empty() ? "" : ",") + fmt(r.top1, 3);
    std::cerr << "  C6 epoch " << e << " loss=" << log.train_loss << " test_top1=" << r.top1 << " t=" << since(t0)
              << "s\n";
  }
  const double secs = since(t0);
  return {r.top1 >= 0.8 && secs < 1800.0, "data=" + source_name() + " train=2000 test=500 epochs=" +
                                              std::to_string(cfg.train.epochs) + " test_top1=" + fmt(r.top1) +
                                              " top5=" + fmt(r.top5) + " curve=[" + curve + "] seconds=" + fmt(secs)};
}

// ---------------------------------------------------------------- C7

Outcome c7_fusion_trend() {
  const auto t0 = Clock::now();
  RunConfig cfg;
  cfg.data.sensor_width = cfg.data.sensor_height = 32;
  cfg.data.frames = 8;
  // Fewer voxels than the sample holds, so top-k keeps the dense half.
  cfg.data.top_k = 48;
  cfg.model.frames = 8;
  cfg.model.grid_h = cfg.model.grid_w = 2;
  cfg.model.width = 32;
  cfg.model.heads = 4;
  cfg.model.st_depth = 1;
  cfg.model.head_hidden = 64;
  cfg.model.stem_channels = {8, 16};
  cfg.model.gmm_widths = {32};
  cfg.model.gmm_kernels = 4;
  cfg.model.n_classes = synthetic::kSplitCueClasses;
  cfg.train.batch_size = 16;
  const std::size_t epochs = 8, per_class_train = 60, per_class_test = 40;

  std::map<Mode, double> mean;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto build = [&](std::size_t per_class, std::uint64_t s) {
      std::vector<Sample> out;
      for (const auto& st : synthetic::make_balanced(synthetic::kSplitCueClasses, per_class, s,
                                                     [](int c, std::uint64_t k) { return synthetic::split_cue_sample(c, k); }))
        out.push_back(preprocess(st, cfg.data));
      return out;
    };
    const auto train = build(per_class_train, derive_seed(70 + seed, 1));
    const auto test = build(per_class_test, derive_seed(70 + seed, 2));
    for (Mode mode : {Mode::Fused, Mode::ImageOnly, Mode::VoxelOnly}) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      EfvModel<float> model(cfg.model, mode, seed);
      Optimizer<float> opt(model.parameters(), tc);
      for (std::size_t e = 0; e < epochs; ++e) train_epoch(model, opt, train, tc, e);
      const double top1 = evaluate(model, test).top1;
      mean[mode] += top1 / 3.0;
      std::cerr << "  C7 seed " << seed << " " << mode_name(mode) << " test_top1=" << top1 << " t=" << since(t0)
                << "s\n";
    }
  }
  const bool ok = mean[Mode::Fused] >= mean[Mode::ImageOnly] && mean[Mode::Fused] >= mean[Mode::VoxelOnly];
  return {ok, "mean_top1 fused=" + fmt(mean[Mode::Fused]) + " image_only=" + fmt(mean[Mode::ImageOnly]) +
                  " voxel_only=" + fmt(mean[Mode::VoxelOnly]) + " seconds=" + fmt(since(t0))};
}

// ---------------------------------------------------------------- C8

const char* kDeterminismIni = R"([data]
frames = 4
frame_height = 17
frame_width = 17
top_k = 64

[model]
width = 16
heads = 2
st_depth = 1
grid = 2x2
head_hidden = 32
stem_channels = 4,8

[graph]
kernels = 3
widths = 16

[train]
epochs = 3
batch_size = 8
seed = 42
augment = true
)";

int run_cli(const std::string& cmd, const CommandOptions& o, std::string* msg = nullptr) {
  std::ostringstream out, err;
  const int rc = run_command(cmd, o, out, err);
  if (msg) *msg = out.str() + err.str();
  return rc;
}

/// Metric rows without the wall-clock column.
std::vector<std::vector<double>> metric_rows(const fs::path& p) {
  std::vector<std::vector<double>> rows;
  for (const auto& e : parse_training_log(read_file_text(p)))
    rows.push_back({double(e.epoch), e.lr, e.train_loss, e.train_top1, e.eval_top1, e.eval_top5});
  return rows;
}

Outcome c8_determinism() {
  test::TempDir dir("accept_det");
  atomic_write(dir / "det.ini", std::string(kDeterminismIni));
  CommandOptions s;
  s.output = dir / "raw";
  s.per_class = 4;
  s.seed = 8;
  if (run_cli("synth", s) != kExitOk) return {false, "synth failed"};
  CommandOptions p;
  p.input = dir / "raw";
  p.output = dir / "cache";
  p.config = dir / "det.ini";
  if (run_cli("preprocess", p) != kExitOk) return {false, "preprocess failed"};

  std::string msg;
  for (const char* run : {"run_a", "run_b"}) {
    CommandOptions t;
    t.input = dir / "cache";
    t.eval_input = dir / "cache";
    t.config = dir / "det.ini";
    t.output = dir / run;
    t.quiet = true;
    if (run_cli("train", t, &msg) != kExitOk) return {false, std::string(run) + " failed: " + msg};
  }
  const auto a = metric_rows(dir / "run_a" / "train_log.csv"), b = metric_rows(dir / "run_b" / "train_log.csv");
  double dev = a.size() == b.size() && !a.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k) dev = std::max(dev, std::abs(a[i][k] - b[i][k]));
  const auto ca = read_file_bytes(dir / "run_a" / "model.efvw"), cb = read_file_bytes(dir / "run_b" / "model.efvw");
  const bool same_ckpt = ca == cb;
  return {dev <= 1e-6 && same_ckpt, "epochs=" + std::to_string(a.size()) + " metric_dev=" + fmt(dev) +
                                        " checkpoint_bytes=" + std::to_string(ca.size()) +
                                        (same_ckpt ? " identical" : " DIFFER") +
                                        " sha256=" + sha256_hex(ca).substr(0, 16)};
}

// ---------------------------------------------------------------- C9

Outcome c9_formats() {
  Rng rng(9);
  Tally t;
  test::TempDir dir("accept_fmt");
  for (int trial = 0; trial < 50; ++trial) {
    EventStream s = test::random_stream(rng, rng.below(3000), 34, 34, kNmnistMaxTimestamp);
    const auto bin = write_nmnist_bin(s);
    t.expect(parse_nmnist_bin(bin).events == s.events, "bin roundtrip " + std::to_string(trial));
    const auto csv = write_event_csv(s);
    t.expect(parse_event_csv(csv).events == s.events, "csv roundtrip " + std::to_string(trial));
  }
  // File-level roundtrip through the CLI.
  const EventStream s = test::random_stream(rng, 2500, 34, 34, kNmnistMaxTimestamp);
  write_event_file(dir / "a.bin", s, EventFormat::Nmnist);
  CommandOptions o;
  o.input = dir / "a.bin";
  o.output = dir / "a.csv";
  t.expect(run_cli("convert", o) == kExitOk, "convert bin->csv");
  o.input = dir / "a.csv";
  o.output = dir / "b.bin";
  t.expect(run_cli("convert", o) == kExitOk, "convert csv->bin");
  t.expect(read_file_bytes(dir / "a.bin") == read_file_bytes(dir / "b.bin"), "bin->csv->bin bytes");

  // Truncation fuzz: every cut either converts a valid prefix or fails with
  // exit 2 and no output; nothing else may appear in the directory.
  const auto bin = read_file_bytes(dir / "a.bin");
  const auto csv = read_file_bytes(dir / "a.csv");
  std::size_t rejected = 0, accepted = 0;
  for (int i = 0; i < 1000; ++i) {
    const bool use_csv = i % 2;
    const auto& src = use_csv ? csv : bin;
    const std::size_t cut = rng.below(src.size());
    const fs::path in = dir / (use_csv ? "cut.csv" : "cut.bin");
    const fs::path out = dir / (use_csv ? "out.bin" : "out.csv");
    atomic_write(in, std::span<const std::uint8_t>(src.data(), cut));
    fs::remove(dir / "out.bin");
    fs::remove(dir / "out.csv");
    CommandOptions c;
    c.input = in;
    c.output = out;
    int rc = -1;
    try {
      rc = run_cli("convert", c);
    } catch (...) {
      t.expect(false, "exception escaped at cut " + std::to_string(cut));
      continue;
    }
    if (rc == kExitOk) {
      ++accepted;
      // A valid prefix: the output must hold exactly the surviving events.
      const auto back = read_event_file(out, 34, 34);
      const auto want = use_csv ? parse_event_csv(std::string_view(reinterpret_cast<const char*>(src.data()), cut))
                                : parse_nmnist_bin(std::span<const std::uint8_t>(src.data(), cut));
      t.expect(back.events == want.events, "prefix output mismatch at cut " + std::to_string(cut));
    } else {
      ++rejected;
      t.expect(rc == kExitInput, "exit code " + std::to_string(rc) + " at cut " + std::to_string(cut));
      t.expect(!fs::exists(out), "partial output at cut " + std::to_string(cut));
    }
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++entries;
    // a.bin, a.csv, b.bin, the cut input, and the output on success.
    t.expect(entries == 4u + (rc == kExitOk), "stray files at cut " + std::to_string(cut));
    fs::remove(in);
  }
  return t.outcome("cuts=1000 rejected=" + std::to_string(rejected) + " valid_prefix=" + std::to_string(accepted));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"C1 gradient_correctness", c1_gradients},  {"C2 preprocessing_oracles", c2_preprocessing},
      {"C3 structural_identities", c3_structure}, {"C4 loss_and_lr_anchors", c4_anchors},
      {"C5 overfit_capacity", c5_overfit},         {"C6 desk_generalization", c6_generalization},
      {"C7 fusion_trend", c7_fusion_trend},        {"C8 determinism", c8_determinism},
      {"C9 format_robustness", c9_formats},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(int(i + 1))) continue;
    const auto t0 = Clock::now();
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    all = all && r.pass;
    std::cout << (r.pass ? "PASS " : "FAIL ") << criteria[i].first << " [" << fmt(since(t0), 3) << "s] " << r.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
