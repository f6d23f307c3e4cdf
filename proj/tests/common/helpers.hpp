#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <unistd.h>

#include "efv/efv.hpp"

namespace efv::test {

/// Uniform random events on a w x h sensor, sorted by time.
inline EventStream random_stream(Rng& rng, std::size_t n, std::uint32_t w = 34, std::uint32_t h = 34,
                                 std::uint64_t t_max = 300000) {
  EventStream s;
  s.sensor_width = w;
  s.sensor_height = h;
  for (std::size_t i = 0; i < n; ++i) {
    s.events.push_back({std::uint32_t(rng.below(w)), std::uint32_t(rng.below(h)), rng.below(t_max + 1),
                        rng.below(2) ? Polarity::On : Polarity::Off});
  }
  sort_by_time(s.events);
  return s;
}

/// A sample with random frames and K distinct random voxels.
inline Sample random_sample(Rng& rng, std::size_t frames, std::size_t hw, std::size_t k, int label) {
  Sample s;
  s.frames = {frames, hw, hw, std::vector<float>(frames * 2 * hw * hw)};
  for (auto& v : s.frames.data) v = rng.uniform() < 0.3 ? float(rng.uniform()) : 0.0f;
  s.voxels.grid_x = s.voxels.grid_y = std::uint32_t(hw / 4);
  s.voxels.grid_t = 8;
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> used;
  while (s.voxels.voxels.size() < k) {
    Voxel v;
    v.x = std::uint32_t(rng.below(s.voxels.grid_x));
    v.y = std::uint32_t(rng.below(s.voxels.grid_y));
    v.t = std::uint32_t(rng.below(8));
    if (!used.insert({v.x, v.y, v.t}).second) continue;
    v.event_count = std::uint32_t(1 + rng.below(20));
    for (auto& f : v.feature) f = float(rng.uniform());
    s.voxels.voxels.push_back(v);
  }
  s.label = label;
  return s;
}

/// Small model configuration for fast tests.
inline EfvConfig tiny_config(std::size_t classes = 4) {
  EfvConfig c;
  c.frames = 4;
  c.grid_h = 2;
  c.grid_w = 2;
  c.width = 16;
  c.heads = 2;
  c.st_depth = 1;
  c.head_hidden = 16;
  c.stem_channels = {4, 8};
  c.gmm_widths = {8};
  c.gmm_kernels = 2;
  c.n_classes = classes;
  return c;
}

/// Fresh empty directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("efv_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

/// Regular files under `dir` (recursive), relative, sorted.
inline std::vector<std::string> list_files(const std::filesystem::path& dir) {
  std::vector<std::string> out;
  if (!std::filesystem::exists(dir)) return out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(std::filesystem::relative(e.path(), dir).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace efv::test
