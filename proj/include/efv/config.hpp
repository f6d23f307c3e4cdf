#pragma once

// Run configuration as INI text:
//
//   [data]   sensor_width, sensor_height, frames, frame_height, frame_width,
//            cell (h,w,t), t_span, top_k
//   [model]  width, heads, st_depth, fusion_depth, grid (h x w), head_hidden,
//            stem_channels, n_classes, bottleneck_std
//   [graph]  radius, kernels, widths
//   [train]  lr, lr_decay, decay_period, epochs, batch_size, seed, mode,
//            optimizer, beta1, beta2, eps, momentum, augment
//
// Missing keys keep their defaults.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "efv/io_util.hpp"
#include "efv/model.hpp"
#include "efv/training.hpp"

namespace efv {

struct RunConfig {
  PreprocessConfig data;
  EfvConfig model;
  TrainConfig train;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (seps.find(c) != std::string::npos) {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <typename V>
V parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  V v{};
  is >> v;
  if (!is || !(is >> std::ws).eof()) throw ConfigError("bad value '" + text + "' for " + key);
  return v;
}

template <typename V>
void read_key(const boost::property_tree::ptree& pt, const std::string& key, V& out) {
  if (auto v = pt.get_optional<std::string>(key)) out = parse_value<V>(key, *v);
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  if (text.find_first_not_of(" \t") == std::string::npos) return out;
  for (const auto& part : split_list(text, ",")) out.push_back(parse_value<std::size_t>(key, part));
  return out;
}

template <typename C>
std::string join(const C& c, const char* sep = ",") {
  std::ostringstream os;
  bool first = true;
  for (const auto& v : c) {
    os << (first ? "" : sep) << v;
    first = false;
  }
  return os.str();
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  static const std::map<std::string, std::set<std::string>> known = {
      {"data", {"sensor_width", "sensor_height", "frames", "frame_height", "frame_width", "cell", "t_span", "top_k"}},
      {"model",
       {"width", "heads", "st_depth", "fusion_depth", "grid", "head_hidden", "stem_channels", "n_classes",
        "bottleneck_std"}},
      {"graph", {"radius", "kernels", "widths"}},
      {"train",
       {"lr", "lr_decay", "decay_period", "epochs", "batch_size", "seed", "mode", "optimizer", "beta1", "beta2", "eps",
        "momentum", "augment"}},
  };
  for (const auto& [section, body] : pt) {
    auto it = known.find(section);
    if (it == known.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, _] : body)
      if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  }

  RunConfig c;
  using detail::read_key;
  read_key(pt, "data.sensor_width", c.data.sensor_width);
  read_key(pt, "data.sensor_height", c.data.sensor_height);
  read_key(pt, "data.frames", c.data.frames);
  read_key(pt, "data.frame_height", c.data.frame_height);
  read_key(pt, "data.frame_width", c.data.frame_width);
  if (auto v = pt.get_optional<std::string>("data.cell")) {
    const auto parts = detail::split_list(*v, ",");
    if (parts.size() != 3) throw ConfigError("data.cell expects h,w,t");
    c.data.cell.height = detail::parse_value<std::uint32_t>("data.cell", parts[0]);
    c.data.cell.width = detail::parse_value<std::uint32_t>("data.cell", parts[1]);
    c.data.cell.time = detail::parse_value<double>("data.cell", parts[2]);
  }
  read_key(pt, "data.t_span", c.data.t_span);
  read_key(pt, "data.top_k", c.data.top_k);

  read_key(pt, "model.width", c.model.width);
  read_key(pt, "model.heads", c.model.heads);
  read_key(pt, "model.st_depth", c.model.st_depth);
  read_key(pt, "model.fusion_depth", c.model.fusion_depth);
  if (auto v = pt.get_optional<std::string>("model.grid")) {
    const auto parts = detail::split_list(*v, "x");
    if (parts.size() != 2) throw ConfigError("model.grid expects HxW, e.g. 2x4");
    c.model.grid_h = detail::parse_value<std::size_t>("model.grid", parts[0]);
    c.model.grid_w = detail::parse_value<std::size_t>("model.grid", parts[1]);
  }
  read_key(pt, "model.head_hidden", c.model.head_hidden);
  if (auto v = pt.get_optional<std::string>("model.stem_channels"))
    c.model.stem_channels = detail::parse_sizes("model.stem_channels", *v);
  read_key(pt, "model.n_classes", c.model.n_classes);
  read_key(pt, "model.bottleneck_std", c.model.bottleneck_std);

  read_key(pt, "graph.radius", c.model.radius);
  read_key(pt, "graph.kernels", c.model.gmm_kernels);
  if (auto v = pt.get_optional<std::string>("graph.widths")) c.model.gmm_widths = detail::parse_sizes("graph.widths", *v);

  read_key(pt, "train.lr", c.train.base_lr);
  read_key(pt, "train.lr_decay", c.train.lr_decay);
  read_key(pt, "train.decay_period", c.train.decay_period);
  read_key(pt, "train.epochs", c.train.epochs);
  read_key(pt, "train.batch_size", c.train.batch_size);
  read_key(pt, "train.seed", c.train.seed);
  if (auto v = pt.get_optional<std::string>("train.mode")) c.train.mode = parse_mode(*v);
  if (auto v = pt.get_optional<std::string>("train.optimizer")) {
    if (*v == "adam") c.train.optimizer = OptimizerKind::Adam;
    else if (*v == "sgd") c.train.optimizer = OptimizerKind::Sgd;
    else throw ConfigError("train.optimizer must be adam or sgd");
  }
  read_key(pt, "train.beta1", c.train.beta1);
  read_key(pt, "train.beta2", c.train.beta2);
  read_key(pt, "train.eps", c.train.eps);
  read_key(pt, "train.momentum", c.train.momentum);
  if (auto v = pt.get_optional<std::string>("train.augment")) c.train.augment = (*v == "true" || *v == "1");

  // Frames must agree between preprocessing and the model.
  c.model.frames = c.data.frames;
  c.model.validate();
  c.train.validate();
  if (c.data.top_k == 0) throw ConfigError("data.top_k must be >= 1");
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file_text(path)); }

/// Every key with its resolved value, in the same INI dialect.
inline std::string config_to_ini(const RunConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "[data]\nsensor_width = " << c.data.sensor_width << "\nsensor_height = " << c.data.sensor_height
     << "\nframes = " << c.data.frames << "\nframe_height = " << c.data.frame_height
     << "\nframe_width = " << c.data.frame_width << "\ncell = " << c.data.cell.height << "," << c.data.cell.width
     << "," << c.data.cell.time << "\nt_span = " << c.data.t_span << "\ntop_k = " << c.data.top_k << "\n\n";
  os << "[model]\nwidth = " << c.model.width << "\nheads = " << c.model.heads << "\nst_depth = " << c.model.st_depth
     << "\nfusion_depth = " << c.model.fusion_depth << "\ngrid = " << c.model.grid_h << "x" << c.model.grid_w
     << "\nhead_hidden = " << c.model.head_hidden << "\nstem_channels = " << detail::join(c.model.stem_channels)
     << "\nn_classes = " << c.model.n_classes << "\nbottleneck_std = " << c.model.bottleneck_std << "\n\n";
  os << "[graph]\nradius = " << c.model.radius << "\nkernels = " << c.model.gmm_kernels
     << "\nwidths = " << detail::join(c.model.gmm_widths) << "\n\n";
  os << "[train]\nlr = " << c.train.base_lr << "\nlr_decay = " << c.train.lr_decay
     << "\ndecay_period = " << c.train.decay_period << "\nepochs = " << c.train.epochs
     << "\nbatch_size = " << c.train.batch_size << "\nseed = " << c.train.seed << "\nmode = " << mode_name(c.train.mode)
     << "\noptimizer = " << (c.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd") << "\nbeta1 = " << c.train.beta1
     << "\nbeta2 = " << c.train.beta2 << "\neps = " << c.train.eps << "\nmomentum = " << c.train.momentum
     << "\naugment = " << (c.train.augment ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace efv
