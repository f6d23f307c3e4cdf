#pragma once

// Weights file:
//   "EFVW" | version u8 | count u32
//   | count * (name_len u32, name, rank u32, dims u32[rank], values f32[prod])
// Little-endian. Model parameters come first in registration order; optional
// optimizer entries follow under "optim.*" names.

#include <filesystem>
#include <optional>

#include "efv/io_util.hpp"
#include "efv/training.hpp"

namespace efv {

inline constexpr std::string_view kCheckpointMagic = "EFVW";
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {
inline void write_entry(ByteWriter& w, std::string_view name, const Shape& shape, auto&& values) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.str(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (auto v : values) w.f32(static_cast<float>(v));
}
}  // namespace detail

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const EfvModel<T>& model, const Optimizer<T>* opt = nullptr) {
  const auto& items = model.parameters().items();
  std::uint32_t count = static_cast<std::uint32_t>(items.size());
  if (opt) count += 1 + 2 * static_cast<std::uint32_t>(items.size());
  ByteWriter w;
  w.str(kCheckpointMagic);
  w.u8(kCheckpointVersion);
  w.u32(count);
  for (const auto& p : items) detail::write_entry(w, p.name, p.tensor.shape(), p.tensor.values());
  if (opt) {
    detail::write_entry(w, "optim.step", {1}, std::vector<float>{static_cast<float>(opt->steps())});
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::vector<double> m = opt->first_moments()[i];
      std::vector<double> v = opt->second_moments()[i];
      if (m.size() != items[i].tensor.size()) m.assign(items[i].tensor.size(), 0.0);
      if (v.size() != items[i].tensor.size()) v.assign(items[i].tensor.size(), 0.0);
      detail::write_entry(w, "optim.m." + items[i].name, items[i].tensor.shape(), m);
      detail::write_entry(w, "optim.v." + items[i].name, items[i].tensor.shape(), v);
    }
  }
  return w.take();
}

/// Parse every entry; throws FormatMismatch on any structural problem,
/// including truncation and trailing bytes.
inline std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != kCheckpointMagic) throw FormatMismatch("not an EFVW checkpoint");
  if (const auto v = r.u8(); v != kCheckpointVersion) {
    throw FormatMismatch("unsupported checkpoint version " + std::to_string(v));
  }
  const std::uint32_t count = r.u32();
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const std::uint32_t len = r.u32();
    if (len > r.remaining()) throw FormatMismatch("checkpoint name truncated");
    e.name = r.str(len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatMismatch("implausible rank " + std::to_string(rank) + " for " + e.name);
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      e.shape.push_back(r.u32());
      n *= e.shape.back();
    }
    if (n > r.remaining() / 4) throw FormatMismatch("checkpoint values truncated for " + e.name);
    e.values.resize(n);
    for (auto& v : e.values) v = r.f32();
    entries.push_back(std::move(e));
  }
  if (!r.at_end()) throw FormatMismatch("trailing bytes after checkpoint entries");
  return entries;
}

template <typename T>
void save_checkpoint(const EfvModel<T>& model, const std::filesystem::path& path,
                     const Optimizer<T>* opt = nullptr) {
  atomic_write(path, encode_checkpoint(model, opt));
}

/// Copy checkpoint values into `model` (and `opt` when given and present).
/// Names and shapes must match the model's configuration exactly; nothing
/// is modified unless the whole file validates.
template <typename T>
void restore_checkpoint(const std::vector<CheckpointEntry>& entries, EfvModel<T>& model, Optimizer<T>* opt = nullptr) {
  auto& items = model.parameters().items();
  if (entries.size() < items.size()) {
    throw ShapeMismatch("checkpoint has " + std::to_string(entries.size()) + " entries, model needs " +
                        std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (entries[i].name != items[i].name) {
      throw ShapeMismatch("checkpoint entry " + std::to_string(i) + " is '" + entries[i].name + "', expected '" +
                          items[i].name + "'");
    }
    if (entries[i].shape != items[i].tensor.shape()) {
      throw ShapeMismatch("parameter " + items[i].name + " has shape " + shape_str(entries[i].shape) +
                          " in checkpoint, " + shape_str(items[i].tensor.shape()) + " in model");
    }
  }
  const bool has_opt = entries.size() == 1 + 3 * items.size() && entries[items.size()].name == "optim.step";
  if (entries.size() != items.size() && !has_opt) throw ShapeMismatch("unexpected extra checkpoint entries");
  if (has_opt) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& m = entries[items.size() + 1 + 2 * i];
      const auto& v = entries[items.size() + 2 + 2 * i];
      if (m.name != "optim.m." + items[i].name || v.name != "optim.v." + items[i].name ||
          m.shape != items[i].tensor.shape() || v.shape != items[i].tensor.shape()) {
        throw ShapeMismatch("optimizer state does not match parameter " + items[i].name);
      }
    }
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto dst = items[i].tensor.mutable_values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(entries[i].values[k]);
  }
  if (opt && has_opt) {
    opt->set_steps(static_cast<std::uint64_t>(entries[items.size()].values.at(0)));
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& m = entries[items.size() + 1 + 2 * i].values;
      const auto& v = entries[items.size() + 2 + 2 * i].values;
      opt->first_moments()[i].assign(m.begin(), m.end());
      if (!opt->second_moments()[i].empty()) opt->second_moments()[i].assign(v.begin(), v.end());
    }
  }
}

/// Build a model for (cfg, mode) and fill it from `path`.
inline EfvModel<float> load_checkpoint(const std::filesystem::path& path, const EfvConfig& cfg, Mode mode,
                                       std::uint64_t seed = 0) {
  const auto entries = decode_checkpoint(read_file_bytes(path));
  EfvModel<float> model(cfg, mode, seed);
  restore_checkpoint(entries, model);
  return model;
}

}  // namespace efv
