#pragma once

// Dataset layouts:
//   raw      <dir>/<class>/<sample>.{bin,csv}   (N-MNIST layout; class
//            directories named by integer label, or sorted by name)
//   cache    <dir>/index.csv + <dir>/samples/<id>.efvc

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "efv/cache.hpp"
#include "efv/event_io.hpp"
#include "efv/io_util.hpp"

namespace efv {

namespace fs = std::filesystem;

enum class EventFormat { Nmnist, Csv };

inline EventFormat parse_format(std::string_view s) {
  if (s == "nmnist" || s == "bin") return EventFormat::Nmnist;
  if (s == "csv") return EventFormat::Csv;
  throw ConfigError("unknown event format '" + std::string(s) + "' (expected nmnist or csv)");
}

inline EventFormat format_for_path(const fs::path& p) {
  return p.extension() == ".csv" ? EventFormat::Csv : EventFormat::Nmnist;
}

inline EventStream read_event_file(const fs::path& path, std::uint32_t width, std::uint32_t height) {
  if (format_for_path(path) == EventFormat::Csv) return parse_event_csv(read_file_text(path), width, height);
  return parse_nmnist_bin(read_file_bytes(path), width, height);
}

inline void write_event_file(const fs::path& path, const EventStream& s, EventFormat fmt) {
  if (fmt == EventFormat::Csv) atomic_write(path, write_event_csv(s));
  else atomic_write(path, write_nmnist_bin(s));
}

struct DatasetEntry {
  fs::path path;
  int label = -1;
  std::string class_name;
};

inline bool is_integer_name(const std::string& s) {
  return !s.empty() && s.size() < 9 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

/// Class directories and their event files, in a deterministic order.
inline std::vector<DatasetEntry> scan_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  const bool numeric = !classes.empty() && std::all_of(classes.begin(), classes.end(), is_integer_name);
  std::sort(classes.begin(), classes.end(), [numeric](const std::string& a, const std::string& b) {
    return numeric ? std::stoi(a) < std::stoi(b) : a < b;
  });
  std::vector<DatasetEntry> out;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / classes[ci])) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".bin" || ext == ".csv")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    const int label = numeric ? std::stoi(classes[ci]) : int(ci);
    for (auto& f : files) out.push_back({std::move(f), label, classes[ci]});
  }
  return out;
}

struct CacheIndexRow {
  std::string file;
  int label = -1;
  std::string source;
  std::size_t events = 0;
};

inline std::string cache_index_csv(const std::vector<CacheIndexRow>& rows) {
  std::ostringstream os;
  os << "file,label,events,source\n";
  for (const auto& r : rows) os << r.file << ',' << r.label << ',' << r.events << ',' << r.source << '\n';
  return os.str();
}

inline std::vector<CacheIndexRow> read_cache_index(const fs::path& dir) {
  std::istringstream is(read_file_text(dir / "index.csv"));
  std::string line;
  std::getline(is, line);
  if (line != "file,label,events,source") throw FormatMismatch("bad cache index header in " + dir.string());
  std::vector<CacheIndexRow> rows;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    std::istringstream ls(line);
    CacheIndexRow r;
    std::string label, events;
    if (!std::getline(ls, r.file, ',') || !std::getline(ls, label, ',') || !std::getline(ls, events, ',')) {
      throw FormatMismatch("cache index line " + std::to_string(n) + " malformed");
    }
    std::getline(ls, r.source);
    try {
      r.label = std::stoi(label);
      r.events = std::stoull(events);
    } catch (const std::exception&) {
      throw FormatMismatch("cache index line " + std::to_string(n) + " malformed");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<Sample> load_cache_dir(const fs::path& dir) {
  std::vector<Sample> out;
  for (const auto& row : read_cache_index(dir)) out.push_back(read_sample_file(dir / row.file));
  return out;
}

}  // namespace efv
