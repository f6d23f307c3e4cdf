#pragma once

// Brute-force reference implementations. Deliberately naive: nested loops,
// ordered maps, full sorts. Shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

#include "efv/efv.hpp"

namespace efv::oracle {

inline std::pair<std::uint64_t, std::uint64_t> time_range(const EventStream& s) {
  std::uint64_t tmin = UINT64_MAX, tmax = 0;
  for (const auto& e : s.events) {
    tmin = std::min(tmin, e.t);
    tmax = std::max(tmax, e.t);
  }
  return {tmin, tmax};
}

/// Nested-loop histogram: for every (slice, polarity, pixel) count matching
/// events, with the slice computed from the real-valued formula.
inline std::vector<std::uint32_t> frame_counts(const EventStream& s, std::size_t T, std::size_t H, std::size_t W) {
  const auto [tmin, tmax] = time_range(s);
  std::vector<std::uint32_t> out(T * 2 * H * W, 0);
  for (std::size_t k = 0; k < T; ++k)
    for (int c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          std::uint32_t n = 0;
          for (const auto& e : s.events) {
            const long double u = (long double)(e.t - tmin) / (long double)(tmax - tmin + 1);
            const auto slice = std::size_t(std::floor(u * (long double)T));
            const int pol = e.polarity == Polarity::On ? 0 : 1;
            if (slice == k && pol == c && e.y * H / s.sensor_height == y && e.x * W / s.sensor_width == x) ++n;
          }
          out[((k * 2 + c) * H + y) * W + x] = n;
        }
  return out;
}

/// Frame values: counts over the per-frame maximum count.
inline std::vector<double> frame_values(const EventStream& s, std::size_t T, std::size_t H, std::size_t W) {
  const auto counts = frame_counts(s, T, H, W);
  std::vector<double> out(counts.size(), 0.0);
  const std::size_t per = 2 * H * W;
  for (std::size_t k = 0; k < T; ++k) {
    std::uint32_t mx = 0;
    for (std::size_t i = 0; i < per; ++i) mx = std::max(mx, counts[k * per + i]);
    if (mx)
      for (std::size_t i = 0; i < per; ++i) out[k * per + i] = double(counts[k * per + i]) / double(mx);
  }
  return out;
}

struct CellStats {
  std::uint32_t on = 0, off = 0;
  std::vector<double> times;
};

using CellKey = std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>;  // (t, y, x)

/// Per-event floor-division voxel assignment keyed by (t, y, x).
inline std::map<CellKey, CellStats> voxel_cells(const EventStream& s, VoxelCell cell, double t_span) {
  const auto [tmin, tmax] = time_range(s);
  std::map<CellKey, CellStats> cells;
  for (const auto& e : s.events) {
    const double u = double(e.t - tmin) / double(tmax - tmin + 1);
    const auto ct = std::uint32_t(std::floor(u * t_span / cell.time));
    auto& c = cells[{ct, e.y / cell.height, e.x / cell.width}];
    (e.polarity == Polarity::On ? c.on : c.off) += 1;
    c.times.push_back(u);
  }
  return cells;
}

struct OracleVoxel {
  CellKey key;
  std::uint32_t count = 0;
  std::array<double, 4> feature{};
};

/// Every voxel with its descriptor, in (t, y, x) order.
inline std::vector<OracleVoxel> voxels(const EventStream& s, VoxelCell cell, double t_span) {
  const auto cells = voxel_cells(s, cell, t_span);
  std::uint32_t max_cnt = 0;
  for (const auto& [k, c] : cells) max_cnt = std::max(max_cnt, c.on + c.off);
  std::vector<OracleVoxel> out;
  for (const auto& [key, c] : cells) {
    double mean = 0;
    for (double t : c.times) mean += t;
    mean /= double(c.times.size());
    const double n = c.on + c.off;
    out.push_back({key, c.on + c.off,
                   {std::log(1.0 + c.on) / std::log(1.0 + max_cnt), std::log(1.0 + c.off) / std::log(1.0 + max_cnt),
                    mean, (double(c.on) - double(c.off)) / n}});
  }
  return out;
}

/// Full sort by (count desc, t, y, x), keep the first k keys.
inline std::set<CellKey> top_k_keys(std::vector<OracleVoxel> v, std::size_t k) {
  std::sort(v.begin(), v.end(), [](const OracleVoxel& a, const OracleVoxel& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.key < b.key;
  });
  std::set<CellKey> out;
  for (std::size_t i = 0; i < std::min(k, v.size()); ++i) out.insert(v[i].key);
  return out;
}

/// All pairs i < j at Euclidean distance strictly below R.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> radius_edges(const VoxelSet& vs, double R) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> want;
  for (std::uint32_t i = 0; i < vs.size(); ++i)
    for (std::uint32_t j = i + 1; j < vs.size(); ++j) {
      const auto &a = vs.voxels[i], &b = vs.voxels[j];
      const double d2 =
          std::pow(double(a.x) - b.x, 2) + std::pow(double(a.y) - b.y, 2) + std::pow(double(a.t) - b.t, 2);
      if (std::sqrt(d2) < R) want.push_back({i, j});
    }
  return want;
}

}  // namespace efv::oracle
