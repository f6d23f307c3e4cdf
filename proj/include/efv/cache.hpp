#pragma once

// Preprocessed sample record:
//   "EFVC" | version u8 | label i32 | T,H,W u32 | T*2*H*W f32
//   | grid_x,grid_y,grid_t u32 | n u32 | C u32
//   | n * (x,y,t i32, event_count u32) | n*C f32
// All integers and floats little-endian.

#include <filesystem>

#include "efv/io_util.hpp"
#include "efv/representations.hpp"

namespace efv {

inline constexpr std::string_view kCacheMagic = "EFVC";
inline constexpr std::uint8_t kCacheVersion = 1;

inline std::vector<std::uint8_t> encode_sample(const Sample& s) {
  ByteWriter w;
  w.str(kCacheMagic);
  w.u8(kCacheVersion);
  w.i32(s.label);
  w.u32(static_cast<std::uint32_t>(s.frames.frames));
  w.u32(static_cast<std::uint32_t>(s.frames.height));
  w.u32(static_cast<std::uint32_t>(s.frames.width));
  for (float v : s.frames.data) w.f32(v);
  w.u32(s.voxels.grid_x);
  w.u32(s.voxels.grid_y);
  w.u32(s.voxels.grid_t);
  w.u32(static_cast<std::uint32_t>(s.voxels.size()));
  w.u32(static_cast<std::uint32_t>(kVoxelFeatures));
  for (const auto& v : s.voxels.voxels) {
    w.i32(static_cast<std::int32_t>(v.x));
    w.i32(static_cast<std::int32_t>(v.y));
    w.i32(static_cast<std::int32_t>(v.t));
    w.u32(v.event_count);
  }
  for (const auto& v : s.voxels.voxels)
    for (float f : v.feature) w.f32(f);
  return w.take();
}

inline Sample decode_sample(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != kCacheMagic) throw FormatMismatch("not an EFVC record");
  if (const auto v = r.u8(); v != kCacheVersion) {
    throw FormatMismatch("unsupported EFVC version " + std::to_string(v));
  }
  Sample s;
  s.label = r.i32();
  s.frames.frames = r.u32();
  s.frames.height = r.u32();
  s.frames.width = r.u32();
  if (s.frames.frames > (1u << 16) || s.frames.height > (1u << 16) || s.frames.width > (1u << 16)) {
    throw FormatMismatch("EFVC frame dimensions implausible");
  }
  const std::size_t cells = s.frames.frames * 2 * s.frames.height * s.frames.width;
  if (cells > r.remaining() / 4) throw FormatMismatch("EFVC frame block truncated");
  s.frames.data.resize(cells);
  for (auto& v : s.frames.data) v = r.f32();
  s.voxels.grid_x = r.u32();
  s.voxels.grid_y = r.u32();
  s.voxels.grid_t = r.u32();
  const std::size_t n = r.u32();
  if (r.u32() != kVoxelFeatures) throw FormatMismatch("EFVC feature width mismatch");
  if (n * (16 + 4 * kVoxelFeatures) != r.remaining()) throw FormatMismatch("EFVC voxel block size mismatch");
  s.voxels.voxels.resize(n);
  for (auto& v : s.voxels.voxels) {
    v.x = static_cast<std::uint32_t>(r.i32());
    v.y = static_cast<std::uint32_t>(r.i32());
    v.t = static_cast<std::uint32_t>(r.i32());
    v.event_count = r.u32();
  }
  for (auto& v : s.voxels.voxels)
    for (auto& f : v.feature) f = r.f32();
  return s;
}

inline void write_sample_file(const std::filesystem::path& path, const Sample& s) {
  atomic_write(path, encode_sample(s));
}

inline Sample read_sample_file(const std::filesystem::path& path) { return decode_sample(read_file_bytes(path)); }

}  // namespace efv
