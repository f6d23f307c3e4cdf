#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "efv/nn.hpp"
#include "efv/random.hpp"

namespace efv {

struct GradCheckOptions {
  double delta = 1e-4;
  /// Coordinates probed per parameter tensor; 0 means every coordinate.
  std::size_t max_coords_per_tensor = 0;
  /// Denominator floor of the relative error, so coordinates whose true
  /// gradient is numerically zero are judged on absolute error instead.
  double magnitude_floor = 1e-6;
  std::uint64_t seed = 0;
  /// When x +- delta lands on a different side of a ReLU kink than x, the
  /// central difference straddles the kink; delta shrinks by kink_shrink and
  /// the coordinate is retried up to kink_retries times.
  std::size_t kink_retries = 3;
  double kink_shrink = 10.0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  std::size_t kink_retries = 0;     // coordinates re-probed with a smaller delta
  std::size_t kinks_unresolved = 0;  // still straddling after every retry
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t coords_checked = 0;
  std::size_t kink_retries = 0;
  std::size_t kinks_unresolved = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compare recorded gradients of the scalar `loss` against central
/// differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate.
inline GradCheckReport grad_check(const std::function<Tensor<double>()>& loss,
                                  std::vector<NamedParameter<double>>& params,
                                  const GradCheckOptions& opt = {}) {
  for (auto& p : params) p.tensor.zero_grad();
  loss().backward();

  GradCheckReport report;
  Rng rng(opt.seed);
  for (auto& p : params) {
    GradCheckEntry entry{p.name};
    const std::size_t n = p.tensor.size();
    std::vector<double> analytic(n, 0.0);
    auto g = p.tensor.grad();
    std::copy(g.begin(), g.end(), analytic.begin());

    std::vector<std::size_t> coords;
    if (opt.max_coords_per_tensor == 0 || n <= opt.max_coords_per_tensor) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      // Always include the largest-gradient coordinate, then random others.
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (std::abs(analytic[i]) > std::abs(analytic[best])) best = i;
      coords.push_back(best);
      while (coords.size() < opt.max_coords_per_tensor) {
        const std::size_t c = rng.below(n);
        if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
      }
    }

    NoGradGuard no_grad;
    KinkProbe probe;
    auto values = p.tensor.mutable_values();
    auto eval = [&](std::size_t c, double v, std::uint64_t& fp) {
      values[c] = v;
      probe.reset();
      const double out = loss().item();
      fp = probe.fingerprint();
      return out;
    };
    for (std::size_t c : coords) {
      const double saved = values[c];
      std::uint64_t centre = 0, fp_up = 0, fp_down = 0;
      eval(c, saved, centre);
      double delta = opt.delta, numeric = 0.0;
      for (std::size_t attempt = 0;; ++attempt) {
        const double up = eval(c, saved + delta, fp_up);
        const double down = eval(c, saved - delta, fp_down);
        numeric = (up - down) / (2.0 * delta);
        if (fp_up == centre && fp_down == centre) break;
        if (attempt == opt.kink_retries) {
          ++entry.kinks_unresolved;
          break;
        }
        ++entry.kink_retries;
        delta /= opt.kink_shrink;
      }
      values[c] = saved;
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic[c], numeric, opt.magnitude_floor));
      entry.max_abs_grad = std::max(entry.max_abs_grad, std::abs(analytic[c]));
    }
    report.kink_retries += entry.kink_retries;
    report.kinks_unresolved += entry.kinks_unresolved;
    entry.coords_checked = coords.size();
    report.coords_checked += coords.size();
    if (entry.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst = entry.name;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace efv
