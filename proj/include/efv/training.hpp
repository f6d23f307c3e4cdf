#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "efv/model.hpp"

namespace efv {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  double base_lr = 1e-3;
  double lr_decay = 0.1;
  std::size_t decay_period = 60;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  Mode mode = Mode::Fused;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.0;  // SGD only
  bool augment = false;

  void validate() const {
    if (!(base_lr > 0.0)) throw ConfigError("lr must be positive");
    if (decay_period < 1) throw ConfigError("decay_period must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }
};

/// Step schedule: base_lr * lr_decay ^ floor(epoch / decay_period).
/// Divides by (1 / lr_decay)^k so decay 0.1 yields exactly 1e-4, 1e-5, ...
inline double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.base_lr / std::pow(1.0 / cfg.lr_decay, double(epoch / cfg.decay_period));
}

/// Adam (or plain SGD with optional momentum) over a ParameterList.
/// Moment buffers are kept in double regardless of the parameter type.
template <typename T>
class Optimizer {
 public:
  Optimizer(ParameterList<T>& params, const TrainConfig& cfg) : params_(&params), cfg_(cfg) {
    for (const auto& p : params) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(cfg.optimizer == OptimizerKind::Adam ? p.tensor.size() : 0, 0.0);
    }
  }

  void step(double lr) {
    ++steps_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(steps_));
    auto& items = params_->items();
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto g = items[i].tensor.grad();
      if (g.empty()) continue;
      auto w = items[i].tensor.mutable_values();
      auto& m = m_[i];
      if (cfg_.optimizer == OptimizerKind::Adam) {
        auto& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double gk = g[k];
          m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
          v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
          const double update = lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
          w[k] = static_cast<T>(double(w[k]) - update);
        }
      } else {
        for (std::size_t k = 0; k < w.size(); ++k) {
          m[k] = cfg_.momentum * m[k] + double(g[k]);
          w[k] = static_cast<T>(double(w[k]) - lr * m[k]);
        }
      }
    }
  }

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  ParameterList<T>* params_;
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_top1 = 0.0;
  double eval_top1 = 0.0;
  double eval_top5 = 0.0;
  double seconds = 0.0;
};

inline std::string training_log_header() { return "epoch,lr,train_loss,train_top1,eval_top1,eval_top5,seconds\n"; }

inline std::string training_log_row(const EpochLog& e) {
  std::ostringstream os;
  os << e.epoch << ',' << std::setprecision(9) << e.lr << ',' << std::setprecision(9) << e.train_loss << ','
     << e.train_top1 << ',' << e.eval_top1 << ',' << e.eval_top5 << ',' << std::fixed << std::setprecision(3)
     << e.seconds << '\n';
  return os.str();
}

/// Sample order for an epoch; depends only on (seed, epoch) so a resumed
/// run replays the same batches.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x7368756600000000ull + epoch));
  rng.shuffle(order);
  return order;
}

/// Position of `target` when classes are ranked by descending log-prob;
/// equal scores rank the lower class index first.
template <typename T>
std::size_t class_rank(std::span<const T> scores, std::size_t target) {
  std::size_t rank = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > scores[target] || (scores[c] == scores[target] && c < target)) ++rank;
  }
  return rank;
}

/// Integer-shift the frames by (dx, dy) pixels with zero fill.
inline FrameStack shift_frames(const FrameStack& fs, int dx, int dy) {
  FrameStack out = fs;
  std::fill(out.data.begin(), out.data.end(), 0.0f);
  for (std::size_t p = 0; p < fs.frames * 2; ++p)
    for (std::size_t y = 0; y < fs.height; ++y)
      for (std::size_t x = 0; x < fs.width; ++x) {
        const long ny = long(y) + dy, nx = long(x) + dx;
        if (ny < 0 || nx < 0 || ny >= long(fs.height) || nx >= long(fs.width)) continue;
        out.data[(p * fs.height + ny) * fs.width + nx] = fs.data[(p * fs.height + y) * fs.width + x];
      }
  return out;
}

struct BatchReport {
  std::size_t index = 0;
  std::vector<std::size_t> samples;
  double loss = 0.0;
};

/// One pass over `data` in the epoch's shuffled order. Each batch's loss is
/// the mean NLL over its samples; the epoch loss is the sample-weighted mean
/// of batch losses. train_top1 counts argmax hits from the same forwards.
template <typename T>
EpochLog train_epoch(EfvModel<T>& model, Optimizer<T>& opt, const std::vector<Sample>& data,
                     const TrainConfig& cfg, std::size_t epoch,
                     const std::function<void(const BatchReport&)>& on_batch = {}) {
  if (data.empty()) throw ConfigError("training set is empty");
  const auto start = std::chrono::steady_clock::now();
  EpochLog log;
  log.epoch = epoch;
  log.lr = lr_schedule(epoch, cfg);
  const auto order = epoch_order(data.size(), cfg.seed, epoch);
  Rng aug_rng(derive_seed(cfg.seed, 0x6175670000000000ull + epoch));
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t b0 = 0, bi = 0; b0 < order.size(); b0 += cfg.batch_size, ++bi) {
    const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
    const T inv = T(1) / T(b1 - b0);
    model.parameters().zero_grad();
    BatchReport rep{bi, {order.begin() + b0, order.begin() + b1}, 0.0};
    for (std::size_t i = b0; i < b1; ++i) {
      const Sample* s = &data[order[i]];
      Sample shifted;
      if (cfg.augment) {
        shifted = *s;
        shifted.frames = shift_frames(s->frames, int(aug_rng.below(5)) - 2, int(aug_rng.below(5)) - 2);
        s = &shifted;
      }
      const int target = s->label;
      Tensor<T> lp = model.forward(*s);
      Tensor<T> loss = nll_loss(lp, std::span<const int>(&target, 1));
      const double lv = double(loss.item());
      if (!std::isfinite(lv)) {
        throw NonFiniteLoss("non-finite loss " + std::to_string(lv) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(bi) + ", sample " + std::to_string(order[i]));
      }
      rep.loss += lv;
      if (class_rank(lp.values(), std::size_t(target)) == 0) ++correct;
      scale(loss, inv).backward();
    }
    loss_sum += rep.loss;
    rep.loss /= double(b1 - b0);
    // Before the step, so observers see the parameters this batch used.
    if (on_batch) on_batch(rep);
    opt.step(log.lr);
  }
  log.train_loss = loss_sum / double(data.size());
  log.train_top1 = double(correct) / double(data.size());
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

struct EvalResult {
  double top1 = 0.0;
  double top5 = 0.0;
  std::size_t n_classes = 0;
  std::vector<std::size_t> confusion;  // [true][predicted], row-major
};

/// Top-k accuracy over precomputed log-probabilities.
inline EvalResult score_predictions(const std::vector<std::vector<double>>& log_probs, const std::vector<int>& labels,
                                    std::size_t n_classes) {
  EvalResult r;
  r.n_classes = n_classes;
  r.confusion.assign(n_classes * n_classes, 0);
  if (log_probs.empty()) return r;
  std::size_t c1 = 0, c5 = 0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    const auto& lp = log_probs[i];
    const std::size_t rank = class_rank(std::span<const double>(lp), std::size_t(labels[i]));
    c1 += rank < 1;
    c5 += rank < 5;
    std::size_t pred = 0;
    for (std::size_t c = 0; c < lp.size(); ++c)
      if (class_rank(std::span<const double>(lp), c) == 0) pred = c;
    ++r.confusion[std::size_t(labels[i]) * n_classes + pred];
  }
  r.top1 = double(c1) / double(log_probs.size());
  r.top5 = double(c5) / double(log_probs.size());
  return r;
}

template <typename T>
EvalResult evaluate(const EfvModel<T>& model, const std::vector<Sample>& data) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> lps;
  std::vector<int> labels;
  lps.reserve(data.size());
  for (const auto& s : data) {
    const Tensor<T> out = model.forward(s);
    const auto v = out.values();
    lps.emplace_back(v.begin(), v.end());
    labels.push_back(s.label);
  }
  return score_predictions(lps, labels, model.config().n_classes);
}

inline std::string confusion_csv(const EvalResult& r) {
  std::ostringstream os;
  os << "true\\pred";
  for (std::size_t c = 0; c < r.n_classes; ++c) os << ',' << c;
  os << '\n';
  for (std::size_t t = 0; t < r.n_classes; ++t) {
    os << t;
    for (std::size_t c = 0; c < r.n_classes; ++c) os << ',' << r.confusion[t * r.n_classes + c];
    os << '\n';
  }
  return os.str();
}

}  // namespace efv
