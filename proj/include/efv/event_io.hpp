#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "efv/error.hpp"

namespace efv {

enum class Polarity : std::uint8_t { Off = 0, On = 1 };

struct EventRecord {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint64_t t = 0;  // microseconds
  Polarity polarity = Polarity::Off;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct EventStream {
  std::vector<EventRecord> events;
  std::uint32_t sensor_width = 34;
  std::uint32_t sensor_height = 34;
  std::optional<int> label;

  bool empty() const { return events.empty(); }
  std::size_t size() const { return events.size(); }
  std::uint64_t duration() const { return events.empty() ? 0 : events.back().t - events.front().t; }

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

inline void check_bounds(const EventRecord& e, std::uint32_t width, std::uint32_t height,
                         const std::string& where) {
  if (e.x >= width || e.y >= height) {
    throw OutOfBounds(where + ": event (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                      ") outside sensor " + std::to_string(width) + "x" + std::to_string(height));
  }
}

/// Stable sort by timestamp; recordings may contain small reorderings.
inline void sort_by_time(std::vector<EventRecord>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const EventRecord& a, const EventRecord& b) { return a.t < b.t; });
}

inline constexpr std::size_t kNmnistRecordBytes = 5;
inline constexpr std::uint64_t kNmnistMaxTimestamp = (1u << 23) - 1;

/// N-MNIST binary: 5 bytes per event, x, y, then polarity in the top bit of
/// a 23-bit big-endian timestamp.
inline EventStream parse_nmnist_bin(std::span<const std::uint8_t> bytes, std::uint32_t sensor_width = 34,
                                    std::uint32_t sensor_height = 34) {
  if (bytes.size() % kNmnistRecordBytes != 0) {
    throw TruncatedRecord("N-MNIST stream of " + std::to_string(bytes.size()) +
                          " bytes is not a multiple of 5 (trailing record at offset " +
                          std::to_string(bytes.size() - bytes.size() % kNmnistRecordBytes) + ")");
  }
  EventStream s;
  s.sensor_width = sensor_width;
  s.sensor_height = sensor_height;
  s.events.reserve(bytes.size() / kNmnistRecordBytes);
  for (std::size_t off = 0; off < bytes.size(); off += kNmnistRecordBytes) {
    const auto* r = bytes.data() + off;
    EventRecord e;
    e.x = r[0];
    e.y = r[1];
    e.polarity = (r[2] & 0x80) ? Polarity::On : Polarity::Off;
    e.t = (std::uint64_t(r[2] & 0x7F) << 16) | (std::uint64_t(r[3]) << 8) | r[4];
    check_bounds(e, sensor_width, sensor_height, "offset " + std::to_string(off));
    s.events.push_back(e);
  }
  sort_by_time(s.events);
  return s;
}

inline std::vector<std::uint8_t> write_nmnist_bin(const EventStream& s) {
  std::vector<std::uint8_t> out;
  out.reserve(s.events.size() * kNmnistRecordBytes);
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& e = s.events[i];
    if (e.x > 255 || e.y > 255 || e.t > kNmnistMaxTimestamp) {
      throw OutOfBounds("event " + std::to_string(i) + " does not fit the N-MNIST layout");
    }
    out.push_back(static_cast<std::uint8_t>(e.x));
    out.push_back(static_cast<std::uint8_t>(e.y));
    out.push_back(static_cast<std::uint8_t>((e.polarity == Polarity::On ? 0x80 : 0x00) | ((e.t >> 16) & 0x7F)));
    out.push_back(static_cast<std::uint8_t>((e.t >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(e.t & 0xFF));
  }
  return out;
}

namespace detail {
template <typename U>
bool parse_field(std::string_view f, U& out) {
  while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
  while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  if (f.empty()) return false;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), out);
  return ec == std::errc() && ptr == f.data() + f.size();
}
}  // namespace detail

/// Lines "x,y,t,p" with p in {0,1}; a first line that does not start with a
/// digit is treated as a header. Blank lines are skipped.
inline EventStream parse_event_csv(std::string_view text, std::uint32_t sensor_width = 34,
                                   std::uint32_t sensor_height = 34) {
  EventStream s;
  s.sensor_width = sensor_width;
  s.sensor_height = sensor_height;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    if (line_no == 1 && !(line.front() >= '0' && line.front() <= '9')) continue;

    std::string_view fields[4];
    std::size_t n = 0, start = 0;
    bool too_many = false;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (n == 4) {
        too_many = true;
        break;
      }
      fields[n++] = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    EventRecord e;
    unsigned p = 0;
    if (too_many || n != 4 || !detail::parse_field(fields[0], e.x) || !detail::parse_field(fields[1], e.y) ||
        !detail::parse_field(fields[2], e.t) || !detail::parse_field(fields[3], p) || p > 1) {
      throw MalformedLine("line " + std::to_string(line_no) + ": expected \"x,y,t,p\" with p in {0,1}, got \"" +
                          std::string(line.substr(0, 80)) + "\"");
    }
    e.polarity = p ? Polarity::On : Polarity::Off;
    check_bounds(e, sensor_width, sensor_height, "line " + std::to_string(line_no));
    s.events.push_back(e);
  }
  sort_by_time(s.events);
  return s;
}

inline std::string write_event_csv(const EventStream& s) {
  std::string out;
  out.reserve(s.events.size() * 16);
  for (const auto& e : s.events) {
    out += std::to_string(e.x);
    out += ',';
    out += std::to_string(e.y);
    out += ',';
    out += std::to_string(e.t);
    out += ',';
    out += e.polarity == Polarity::On ? '1' : '0';
    out += '\n';
  }
  return out;
}

/// Event with its timestamp mapped into [0, t_span).
struct TimedEvent {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  double time = 0.0;
  Polarity polarity = Polarity::Off;
};

struct NormalizedStream {
  std::vector<TimedEvent> events;
  std::uint32_t sensor_width = 0;
  std::uint32_t sensor_height = 0;
  double t_span = 0.0;
};

/// Fraction (t - t_min) / (t_max - t_min + 1), always in [0, 1).
inline double unit_time(std::uint64_t t, std::uint64_t t_min, std::uint64_t t_max) {
  return double(t - t_min) / double(t_max - t_min + 1);
}

inline NormalizedStream normalize_timestamps(const EventStream& s, double t_span) {
  if (s.events.empty()) throw EmptyStream("cannot normalize an empty event stream");
  if (!(t_span > 0.0)) throw ConfigError("t_span must be positive");
  const auto [lo, hi] = std::minmax_element(s.events.begin(), s.events.end(),
                                            [](const auto& a, const auto& b) { return a.t < b.t; });
  NormalizedStream out{{}, s.sensor_width, s.sensor_height, t_span};
  out.events.reserve(s.events.size());
  for (const auto& e : s.events) {
    out.events.push_back({e.x, e.y, unit_time(e.t, lo->t, hi->t) * t_span, e.polarity});
  }
  return out;
}

}  // namespace efv
