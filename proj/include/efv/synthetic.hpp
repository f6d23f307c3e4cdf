#pragma once

// Seeded event-stream generators used where recorded datasets are absent.
//
// saccade_digit(): a stroke-rendered digit seen by a simulated DVS while the
// sensor follows three linear saccades (the way N-MNIST was recorded). Events
// fire when a pixel's log intensity moves a contrast threshold away from its
// last reference level.
//
// split_cue_sample(): a 4-class set whose label is (stripe orientation) x
// (which half of the recording is dense). Stripe orientation lives below the
// 4-pixel voxel cell size, so only the frames resolve it. Density is a whole
// multiple per slice and frames are max-normalized per slice, so only the
// voxel counts resolve it.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "efv/event_io.hpp"
#include "efv/random.hpp"

namespace efv::synthetic {

struct Point {
  double x, y;
};
using Polyline = std::vector<Point>;

namespace detail {

inline Polyline ellipse(double cx, double cy, double rx, double ry, int n = 14) {
  Polyline p;
  for (int i = 0; i <= n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return p;
}

inline double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

/// Digit glyphs as polylines in the unit square, y pointing down.
inline std::vector<Polyline> digit_strokes(int digit) {
  using detail::ellipse;
  switch (digit) {
    case 0: return {ellipse(0.5, 0.5, 0.28, 0.42)};
    case 1: return {{{0.33, 0.22}, {0.52, 0.06}, {0.52, 0.94}}};
    case 2: return {{{0.2, 0.25}, {0.35, 0.08}, {0.65, 0.08}, {0.8, 0.25}, {0.75, 0.45}, {0.2, 0.93}, {0.85, 0.93}}};
    case 3: return {{{0.2, 0.1}, {0.8, 0.1}, {0.5, 0.45}, {0.8, 0.65}, {0.7, 0.9}, {0.45, 0.95}, {0.2, 0.85}}};
    case 4: return {{{0.65, 0.95}, {0.65, 0.05}, {0.15, 0.65}, {0.85, 0.65}}};
    case 5: return {{{0.8, 0.08}, {0.28, 0.08}, {0.22, 0.45}, {0.6, 0.4}, {0.8, 0.6}, {0.7, 0.9}, {0.2, 0.9}}};
    case 6:
      return {{{0.75, 0.08}, {0.42, 0.25}, {0.24, 0.6}, {0.32, 0.9}, {0.65, 0.92}, {0.78, 0.7}, {0.6, 0.52},
               {0.26, 0.62}}};
    case 7: return {{{0.15, 0.08}, {0.85, 0.08}, {0.4, 0.95}}};
    case 8: return {ellipse(0.5, 0.27, 0.22, 0.19), ellipse(0.5, 0.7, 0.28, 0.24)};
    case 9: return {ellipse(0.5, 0.3, 0.25, 0.2), {{0.75, 0.3}, {0.62, 0.95}}};
    default: throw ConfigError("digit must be in 0..9");
  }
}

struct SaccadeOptions {
  std::uint32_t sensor = 34;
  double glyph_size = 26.0;        // pixels
  double saccade_ms = 100.0;       // per leg, three legs
  double step_us = 1000.0;
  std::size_t noise_events = 120;
};

/// One simulated recording of `digit`; all randomness comes from `seed`.
inline EventStream saccade_digit(int digit, std::uint64_t seed, const SaccadeOptions& opt = {}) {
  Rng rng(seed);
  auto strokes = digit_strokes(digit);
  // Per-sample glyph variation: vertex jitter, rotation, scale, stroke width.
  const double rot = rng.uniform(-0.2, 0.2);
  const double scl = rng.uniform(0.8, 1.0) * opt.glyph_size;
  const double slant = rng.uniform(-0.15, 0.15);
  const double half_width = rng.uniform(0.6, 1.2);
  const double threshold = rng.uniform(0.2, 0.3);
  const double ox = rng.uniform(1.0, 3.0), oy = rng.uniform(1.0, 3.0);
  for (auto& line : strokes) {
    for (auto& p : line) {
      double x = p.x + rng.uniform(-0.03, 0.03) - 0.5, y = p.y + rng.uniform(-0.03, 0.03) - 0.5;
      x += slant * y;
      const double rx = std::cos(rot) * x - std::sin(rot) * y, ry = std::sin(rot) * x + std::cos(rot) * y;
      p = {ox + scl * (rx + 0.5), oy + scl * (ry + 0.5)};
    }
  }
  auto intensity = [&](double px, double py) {
    double d = 1e9;
    for (const auto& line : strokes)
      for (std::size_t i = 0; i + 1 < line.size(); ++i)
        d = std::min(d, detail::segment_distance({px, py}, line[i], line[i + 1]));
    return std::clamp(1.0 - (d - half_width), 0.0, 1.0);
  };

  // Triangle path (0,0) -> (2.5,4) -> (5,0) -> (0,0), one leg per saccade.
  const std::array<Point, 4> path{{{0, 0}, {2.5, 4.0}, {5.0, 0.0}, {0, 0}}};
  const double leg_us = opt.saccade_ms * 1000.0;
  const std::size_t steps = static_cast<std::size_t>(3 * leg_us / opt.step_us);
  const std::uint32_t n = opt.sensor;

  EventStream s;
  s.sensor_width = s.sensor_height = n;
  s.label = digit;
  std::vector<double> ref(std::size_t(n) * n);
  auto log_i = [](double v) { return std::log(0.1 + v); };
  for (std::uint32_t y = 0; y < n; ++y)
    for (std::uint32_t x = 0; x < n; ++x) ref[y * n + x] = log_i(intensity(x, y));

  for (std::size_t k = 1; k <= steps; ++k) {
    const double t_us = k * opt.step_us;
    const std::size_t leg = std::min<std::size_t>(2, static_cast<std::size_t>(t_us / leg_us));
    const double f = (t_us - leg * leg_us) / leg_us;
    const double sx = path[leg].x + f * (path[leg + 1].x - path[leg].x);
    const double sy = path[leg].y + f * (path[leg + 1].y - path[leg].y);
    for (std::uint32_t y = 0; y < n; ++y)
      for (std::uint32_t x = 0; x < n; ++x) {
        // The scene moves opposite to the sensor.
        const double l = log_i(intensity(x + sx, y + sy));
        double& r = ref[y * n + x];
        while (l - r >= threshold) {
          r += threshold;
          s.events.push_back({x, y, std::uint64_t(t_us + rng.uniform(0.0, opt.step_us)), Polarity::On});
        }
        while (r - l >= threshold) {
          r -= threshold;
          s.events.push_back({x, y, std::uint64_t(t_us + rng.uniform(0.0, opt.step_us)), Polarity::Off});
        }
      }
  }
  for (std::size_t i = 0; i < opt.noise_events; ++i) {
    s.events.push_back({std::uint32_t(rng.below(n)), std::uint32_t(rng.below(n)),
                        std::uint64_t(rng.uniform(0.0, 3 * leg_us)), rng.below(2) ? Polarity::On : Polarity::Off});
  }
  sort_by_time(s.events);
  return s;
}

struct SplitCueOptions {
  std::uint32_t sensor = 32;
  std::uint32_t cell = 4;          // must equal the voxel cell edge
  std::uint32_t region_cells = 3;  // pattern spans region_cells^2 cells
  std::size_t slices = 8;          // must equal the frame count
  std::uint64_t slice_us = 1000;
  std::uint32_t dense_repeat = 4;  // events per lit pixel in a dense slice
  std::uint32_t sparse_repeat = 1;
  std::size_t noise_pixels = 40;
};

inline constexpr int kSplitCueClasses = 4;

/// label = 2 * vertical_stripes + dense_first. Layout and timing draw from
/// separate generators, so labels sharing a seed share every pixel.
inline EventStream split_cue_sample(int label, std::uint64_t seed, const SplitCueOptions& opt = {}) {
  if (label < 0 || label >= kSplitCueClasses) throw ConfigError("split-cue label must be in 0..3");
  Rng layout(derive_seed(seed, 0));
  Rng timing(derive_seed(seed, 1));
  const bool vertical = label / 2;
  const bool dense_first = label % 2;
  const std::uint32_t cells = opt.sensor / opt.cell;
  const std::uint32_t cx0 = std::uint32_t(layout.below(cells - opt.region_cells + 1));
  const std::uint32_t cy0 = std::uint32_t(layout.below(cells - opt.region_cells + 1));
  const std::uint32_t stripe_phase = std::uint32_t(layout.below(2));
  const std::uint64_t span = opt.slice_us * opt.slices;
  auto repeat = [&](std::size_t k) {
    return (k < opt.slices / 2) == dense_first ? opt.dense_repeat : opt.sparse_repeat;
  };
  auto emit = [&](EventStream& s, std::uint32_t x, std::uint32_t y, std::size_t k, Polarity p) {
    for (std::uint32_t r = 0; r < repeat(k); ++r)
      s.events.push_back({x, y, std::uint64_t((double(k) + timing.uniform(0.0, 1.0)) * double(opt.slice_us)), p});
  };

  EventStream s;
  s.sensor_width = s.sensor_height = opt.sensor;
  s.label = label;
  for (std::size_t k = 0; k < opt.slices; ++k)
    for (std::uint32_t cy = 0; cy < opt.region_cells; ++cy)
      for (std::uint32_t cx = 0; cx < opt.region_cells; ++cx) {
        const Polarity p = (cx + cy) % 2 == 0 ? Polarity::On : Polarity::Off;
        for (std::uint32_t py = 0; py < opt.cell; ++py)
          for (std::uint32_t px = 0; px < opt.cell; ++px)
            if (((vertical ? px : py) + stripe_phase) % 2 == 0)
              emit(s, (cx0 + cx) * opt.cell + px, (cy0 + cy) * opt.cell + py, k, p);
      }
  for (std::size_t i = 0; i < opt.noise_pixels; ++i) {
    const auto x = std::uint32_t(layout.below(opt.sensor));
    const auto y = std::uint32_t(layout.below(opt.sensor));
    const auto k = std::size_t(layout.below(opt.slices));
    emit(s, x, y, k, layout.below(2) ? Polarity::On : Polarity::Off);
  }
  // Anchors pin the normalized time range to exactly [0, span). They repeat
  // like everything else in their slice so frames stay label-blind.
  for (std::uint32_t r = 0; r < repeat(0); ++r) s.events.push_back({0, 0, 0, Polarity::On});
  for (std::uint32_t r = 0; r < repeat(opt.slices - 1); ++r)
    s.events.push_back({opt.sensor - 1, opt.sensor - 1, span - 1, Polarity::On});
  sort_by_time(s.events);
  return s;
}

/// `per_class` samples of every class, interleaved by class.
template <typename Gen>
std::vector<EventStream> make_balanced(int classes, std::size_t per_class, std::uint64_t seed, Gen&& gen) {
  std::vector<EventStream> out;
  out.reserve(classes * per_class);
  for (std::size_t i = 0; i < per_class; ++i)
    for (int c = 0; c < classes; ++c) out.push_back(gen(c, derive_seed(seed, i * classes + c)));
  return out;
}

}  // namespace efv::synthetic
