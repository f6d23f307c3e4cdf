#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <tuple>
#include <vector>

#include "efv/event_io.hpp"

namespace efv {

/// T two-channel event images, laid out [T, 2, H, W]. Channel 0 counts ON
/// events, channel 1 OFF events; each frame is scaled by its own max count.
struct FrameStack {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  float at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
    return data[((t * 2 + c) * height + y) * width + x];
  }

  friend bool operator==(const FrameStack&, const FrameStack&) = default;
};

/// Time slice of an event: floor(T * (t - t_min) / (t_max - t_min + 1)),
/// evaluated in integers so it never disagrees with a direct count.
inline std::size_t time_slice(std::uint64_t t, std::uint64_t t_min, std::uint64_t t_max, std::size_t slices) {
  return static_cast<std::size_t>((std::uint64_t(slices) * (t - t_min)) / (t_max - t_min + 1));
}

/// Raw per-slice, per-polarity pixel counts laid out like FrameStack::data.
inline std::vector<std::uint32_t> accumulate_frame_counts(const EventStream& s, std::size_t frames,
                                                          std::size_t out_h, std::size_t out_w) {
  if (s.events.empty()) throw EmptyStream("cannot stack frames of an empty stream");
  if (frames == 0 || out_h == 0 || out_w == 0) throw ConfigError("frame stack dimensions must be positive");
  const auto [lo, hi] = std::minmax_element(s.events.begin(), s.events.end(),
                                            [](const auto& a, const auto& b) { return a.t < b.t; });
  const std::uint64_t t_min = lo->t, t_max = hi->t;
  std::vector<std::uint32_t> counts(frames * 2 * out_h * out_w, 0);
  for (const auto& e : s.events) {
    check_bounds(e, s.sensor_width, s.sensor_height, "stack_frames");
    const std::size_t k = time_slice(e.t, t_min, t_max, frames);
    const std::size_t c = e.polarity == Polarity::On ? 0 : 1;
    const std::size_t py = std::size_t(e.y) * out_h / s.sensor_height;
    const std::size_t px = std::size_t(e.x) * out_w / s.sensor_width;
    ++counts[((k * 2 + c) * out_h + py) * out_w + px];
  }
  return counts;
}

inline FrameStack stack_frames(const EventStream& s, std::size_t frames, std::size_t out_h, std::size_t out_w) {
  const auto counts = accumulate_frame_counts(s, frames, out_h, out_w);
  FrameStack fs{frames, out_h, out_w, std::vector<float>(counts.size(), 0.0f)};
  const std::size_t per_frame = 2 * out_h * out_w;
  for (std::size_t k = 0; k < frames; ++k) {
    const auto first = counts.begin() + k * per_frame;
    const std::uint32_t mx = *std::max_element(first, first + per_frame);
    if (mx == 0) continue;
    for (std::size_t i = 0; i < per_frame; ++i) {
      fs.data[k * per_frame + i] = static_cast<float>(double(first[i]) / double(mx));
    }
  }
  return fs;
}

inline constexpr std::size_t kVoxelFeatures = 4;

/// Grid cell coordinates plus the aggregated feature
/// [on share, off share, mean time, polarity balance].
struct Voxel {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t t = 0;
  std::uint32_t event_count = 0;
  std::array<float, kVoxelFeatures> feature{};

  friend bool operator==(const Voxel&, const Voxel&) = default;
};

struct VoxelSet {
  std::vector<Voxel> voxels;
  std::uint32_t grid_x = 0;
  std::uint32_t grid_y = 0;
  std::uint32_t grid_t = 0;

  std::size_t size() const { return voxels.size(); }
  bool empty() const { return voxels.empty(); }

  friend bool operator==(const VoxelSet&, const VoxelSet&) = default;
};

/// Voxel size: `width` x `height` pixels and `time` normalized time units.
struct VoxelCell {
  std::uint32_t height = 4;
  std::uint32_t width = 4;
  double time = 4.0;
};

inline std::uint32_t voxel_time_index(double unit, double t_span, double cell_t, std::uint32_t grid_t) {
  const auto k = static_cast<std::uint32_t>(std::floor(unit * t_span / cell_t));
  return std::min(k, grid_t - 1);
}

/// All non-empty voxels, ordered by ascending (t, y, x) cell coordinate.
inline VoxelSet voxelize(const EventStream& s, const VoxelCell& cell, double t_span) {
  if (cell.height == 0 || cell.width == 0 || !(cell.time > 0.0)) {
    throw InvalidCell("voxel cell dimensions must be positive");
  }
  if (!(t_span > 0.0)) throw ConfigError("t_span must be positive");
  if (s.events.empty()) throw EmptyStream("cannot voxelize an empty stream");

  VoxelSet vs;
  vs.grid_x = (s.sensor_width + cell.width - 1) / cell.width;
  vs.grid_y = (s.sensor_height + cell.height - 1) / cell.height;
  vs.grid_t = static_cast<std::uint32_t>(std::ceil(t_span / cell.time));

  const auto [lo, hi] = std::minmax_element(s.events.begin(), s.events.end(),
                                            [](const auto& a, const auto& b) { return a.t < b.t; });
  struct Keyed {
    std::uint64_t key;
    double unit;
    bool on;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(s.events.size());
  for (const auto& e : s.events) {
    check_bounds(e, s.sensor_width, s.sensor_height, "voxelize");
    const double u = unit_time(e.t, lo->t, hi->t);
    const std::uint64_t ct = voxel_time_index(u, t_span, cell.time, vs.grid_t);
    const std::uint64_t cy = e.y / cell.height, cx = e.x / cell.width;
    keyed.push_back({(ct << 42) | (cy << 21) | cx, u, e.polarity == Polarity::On});
  }
  // Full ordering so per-cell time sums do not depend on input event order.
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.key, a.unit, a.on) < std::tie(b.key, b.unit, b.on);
  });

  struct Acc {
    std::uint64_t key;
    std::uint32_t on = 0, off = 0;
    double time_sum = 0.0;
  };
  std::vector<Acc> cells;
  for (const auto& k : keyed) {
    if (cells.empty() || cells.back().key != k.key) cells.push_back({k.key});
    auto& a = cells.back();
    (k.on ? a.on : a.off) += 1;
    a.time_sum += k.unit;
  }
  std::uint32_t max_cnt = 0;
  for (const auto& a : cells) max_cnt = std::max(max_cnt, a.on + a.off);
  const double log_max = std::log1p(double(max_cnt));

  vs.voxels.reserve(cells.size());
  for (const auto& a : cells) {
    Voxel v;
    v.t = static_cast<std::uint32_t>(a.key >> 42);
    v.y = static_cast<std::uint32_t>((a.key >> 21) & 0x1FFFFF);
    v.x = static_cast<std::uint32_t>(a.key & 0x1FFFFF);
    v.event_count = a.on + a.off;
    const double n = v.event_count;
    v.feature = {static_cast<float>(std::log1p(double(a.on)) / log_max),
                 static_cast<float>(std::log1p(double(a.off)) / log_max),
                 static_cast<float>(a.time_sum / n),
                 static_cast<float>((double(a.on) - double(a.off)) / n)};
    vs.voxels.push_back(v);
  }
  return vs;
}

/// Keep the `k` voxels with the most events; equal counts prefer the smaller
/// (t, y, x). Survivors keep their input order.
inline VoxelSet select_top_k(const VoxelSet& vs, std::size_t k) {
  if (k == 0) throw ConfigError("top-k needs k >= 1");
  if (vs.voxels.size() <= k) return vs;
  std::vector<std::size_t> idx(vs.voxels.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto better = [&](std::size_t a, std::size_t b) {
    const Voxel& va = vs.voxels[a];
    const Voxel& vb = vs.voxels[b];
    if (va.event_count != vb.event_count) return va.event_count > vb.event_count;
    return std::tie(va.t, va.y, va.x) < std::tie(vb.t, vb.y, vb.x);
  };
  std::nth_element(idx.begin(), idx.begin() + std::ptrdiff_t(k) - 1, idx.end(), better);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  VoxelSet out{{}, vs.grid_x, vs.grid_y, vs.grid_t};
  out.voxels.reserve(k);
  for (std::size_t i : idx) out.voxels.push_back(vs.voxels[i]);
  return out;
}

/// Parameters of the stream -> (frames, voxels) conversion.
struct PreprocessConfig {
  std::uint32_t sensor_width = 34;
  std::uint32_t sensor_height = 34;
  std::size_t frames = 8;
  std::size_t frame_height = 0;  // 0: sensor height
  std::size_t frame_width = 0;   // 0: sensor width
  VoxelCell cell{};
  double t_span = 32.0;
  std::size_t top_k = 512;
};

/// One preprocessed example as consumed by the model.
struct Sample {
  FrameStack frames;
  VoxelSet voxels;
  int label = -1;

  friend bool operator==(const Sample&, const Sample&) = default;
};

inline Sample preprocess(const EventStream& s, const PreprocessConfig& cfg) {
  const std::size_t fh = cfg.frame_height ? cfg.frame_height : s.sensor_height;
  const std::size_t fw = cfg.frame_width ? cfg.frame_width : s.sensor_width;
  Sample out;
  out.frames = stack_frames(s, cfg.frames, fh, fw);
  out.voxels = select_top_k(voxelize(s, cfg.cell, cfg.t_span), cfg.top_k);
  out.label = s.label.value_or(-1);
  return out;
}

}  // namespace efv
