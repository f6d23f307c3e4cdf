#pragma once

// Loss/accuracy curves and confusion matrices as standalone SVG documents.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "efv/training.hpp"

namespace efv {

/// Parse a training log written by training_log_header()/training_log_row().
inline std::vector<EpochLog> parse_training_log(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line + "\n" != training_log_header()) {
    throw FormatMismatch("training log must start with '" +
                         training_log_header().substr(0, training_log_header().size() - 1) + "'");
  }
  std::vector<EpochLog> rows;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    EpochLog e;
    if (!(ls >> e.epoch >> e.lr >> e.train_loss >> e.train_top1 >> e.eval_top1 >> e.eval_top5 >> e.seconds) ||
        !(ls >> std::ws).eof()) {
      throw MalformedLine("training log line " + std::to_string(n) + " malformed");
    }
    rows.push_back(e);
  }
  return rows;
}

/// Inverse of confusion_csv().
inline EvalResult parse_confusion_csv(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  EvalResult r;
  std::vector<std::vector<std::size_t>> rows;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    if (n == 1) {
      if (line.rfind("true\\pred", 0) != 0) throw FormatMismatch("confusion CSV must start with 'true\\pred'");
      r.n_classes = std::size_t(std::count(line.begin(), line.end(), ','));
      continue;
    }
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    std::size_t label, v;
    std::vector<std::size_t> row;
    if (!(ls >> label)) throw MalformedLine("confusion line " + std::to_string(n) + " malformed");
    while (ls >> v) row.push_back(v);
    if (row.size() != r.n_classes || !ls.eof()) throw MalformedLine("confusion line " + std::to_string(n) + " malformed");
    rows.push_back(row);
  }
  if (r.n_classes == 0 || rows.size() != r.n_classes) throw FormatMismatch("confusion matrix is not square");
  for (const auto& row : rows) r.confusion.insert(r.confusion.end(), row.begin(), row.end());
  return r;
}

namespace detail {

struct Series {
  std::string name;
  std::string colour;
  std::vector<double> values;
};

inline std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

/// One panel of line plots at (x0, y0) with size (w, h); epochs on x.
inline void line_panel(std::ostream& os, double x0, double y0, double w, double h, const std::string& title,
                       const std::vector<double>& xs, const std::vector<Series>& series, double lo, double hi) {
  if (!(hi > lo)) hi = lo + 1.0;
  const double xmin = xs.front(), xmax = xs.size() > 1 ? xs.back() : xs.front() + 1.0;
  auto px = [&](double x) { return x0 + (x - xmin) / (xmax - xmin) * w; };
  auto py = [&](double y) { return y0 + h - (y - lo) / (hi - lo) * h; };
  os << "<text x=\"" << x0 << "\" y=\"" << y0 - 8 << "\" font-size=\"13\">" << title << "</text>\n";
  os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
     << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << py(v) + 4 << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(v, 3)
       << "</text>\n";
  }
  os << "<text x=\"" << x0 << "\" y=\"" << y0 + h + 14 << "\" font-size=\"10\">" << fmt(xmin) << "</text>\n";
  os << "<text x=\"" << x0 + w << "\" y=\"" << y0 + h + 14 << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(xmax)
     << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    os << "<polyline fill=\"none\" stroke=\"" << ser.colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) os << fmt(px(xs[i]), 7) << ',' << fmt(py(ser.values[i]), 7) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << x0 + w + 8 << "\" y=\"" << y0 + 12 + 14 * s << "\" font-size=\"11\" fill=\"" << ser.colour
       << "\">" << ser.name << "</text>\n";
  }
}

}  // namespace detail

inline std::string curves_svg(const std::vector<EpochLog>& log) {
  if (log.empty()) throw EmptyStream("training log has no epochs");
  std::vector<double> xs;
  detail::Series loss{"train_loss", "#c0392b", {}};
  detail::Series t1{"train_top1", "#2c7bb6", {}}, e1{"eval_top1", "#1a9641", {}}, e5{"eval_top5", "#fdae61", {}};
  for (const auto& e : log) {
    xs.push_back(double(e.epoch));
    loss.values.push_back(e.train_loss);
    t1.values.push_back(e.train_top1);
    e1.values.push_back(e.eval_top1);
    e5.values.push_back(e.eval_top5);
  }
  const auto [lmin, lmax] = std::minmax_element(loss.values.begin(), loss.values.end());
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"520\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"640\" height=\"520\" fill=\"white\"/>\n";
  detail::line_panel(os, 60, 30, 460, 190, "loss", xs, {loss}, std::min(0.0, *lmin), *lmax);
  detail::line_panel(os, 60, 290, 460, 190, "accuracy", xs, {t1, e1, e5}, 0.0, 1.0);
  os << "<text x=\"290\" y=\"512\" font-size=\"11\" text-anchor=\"middle\">epoch</text>\n</svg>\n";
  return os.str();
}

inline std::string confusion_svg(const EvalResult& r) {
  const std::size_t n = r.n_classes;
  if (n == 0) throw EmptyStream("confusion matrix is empty");
  const double cell = std::max(18.0, 360.0 / double(n)), off = 50.0, size = off + cell * double(n) + 20;
  std::vector<std::size_t> row_sum(n, 0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t p = 0; p < n; ++p) row_sum[t] += r.confusion[t * n + p];
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
     << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << off << "\" y=\"16\" font-size=\"12\">predicted &#8594;</text>\n";
  os << "<text x=\"14\" y=\"" << off << "\" font-size=\"12\" transform=\"rotate(90 14 " << off
     << ")\">true &#8594;</text>\n";
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t c = r.confusion[t * n + p];
      const double frac = row_sum[t] ? double(c) / double(row_sum[t]) : 0.0;
      const int shade = int(std::lround(255.0 * (1.0 - frac)));
      const double x = off + cell * double(p), y = off + cell * double(t);
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb("
         << shade << ',' << shade << ",255)\" stroke=\"#ccc\"/>\n";
      if (c) {
        os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
           << "\" font-size=\"10\" text-anchor=\"middle\" fill=\"" << (frac > 0.5 ? "white" : "black") << "\">" << c
           << "</text>\n";
      }
    }
  for (std::size_t k = 0; k < n; ++k) {
    os << "<text x=\"" << off + cell * (double(k) + 0.5) << "\" y=\"" << off - 6
       << "\" font-size=\"10\" text-anchor=\"middle\">" << k << "</text>\n";
    os << "<text x=\"" << off - 6 << "\" y=\"" << off + cell * (double(k) + 0.5) + 4
       << "\" font-size=\"10\" text-anchor=\"end\">" << k << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace efv
