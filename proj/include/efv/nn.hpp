#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "efv/ops.hpp"
#include "efv/random.hpp"

namespace efv {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered registry of learnable tensors. Order is registration order and
/// defines checkpoint layout.
template <typename T>
class ParameterList {
 public:
  Tensor<T> add(std::string name, Shape shape, std::vector<T> values) {
    for (const auto& p : params_)
      if (p.name == name) throw ConfigError("duplicate parameter name " + name);
    auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
    params_.push_back({std::move(name), t});
    return t;
  }

  Tensor<T> uniform(std::string name, Shape shape, T bound, Rng& rng) {
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-double(bound), double(bound)));
    return add(std::move(name), std::move(shape), std::move(v));
  }

  Tensor<T> normal(std::string name, Shape shape, T stddev, Rng& rng) {
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal(0.0, double(stddev)));
    return add(std::move(name), std::move(shape), std::move(v));
  }

  Tensor<T> filled(std::string name, Shape shape, T value) {
    const std::size_t n = numel(shape);
    return add(std::move(name), std::move(shape), std::vector<T>(n, value));
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p.tensor;
    return nullptr;
  }

  std::vector<NamedParameter<T>>& items() { return params_; }
  const std::vector<NamedParameter<T>>& items() const { return params_; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

 private:
  std::vector<NamedParameter<T>> params_;
};

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  static LinearParams make(ParameterList<T>& reg, const std::string& name, std::size_t in,
                           std::size_t out, Rng& rng) {
    const T bound = T(1) / std::sqrt(T(in));
    return {reg.uniform(name + ".weight", {in, out}, bound, rng),
            reg.uniform(name + ".bias", {out}, bound, rng)};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;

  static LayerNormParams make(ParameterList<T>& reg, const std::string& name, std::size_t d) {
    return {reg.filled(name + ".gamma", {d}, T(1)), reg.filled(name + ".beta", {d}, T(0))};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

/// Pre-norm attention block: per-head projections are packed column-wise
/// into the [d, d] query/key/value matrices.
template <typename T>
struct AttentionBlockParams {
  std::size_t width = 0;
  std::size_t heads = 1;
  LayerNormParams<T> ln1, ln2;
  LinearParams<T> query, key, value, out;
  LinearParams<T> mlp_in, mlp_out;  // d -> 4d -> d

  static AttentionBlockParams make(ParameterList<T>& reg, const std::string& name, std::size_t d,
                                   std::size_t heads, Rng& rng) {
    if (heads == 0 || d % heads != 0)
      throw ConfigError("width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    AttentionBlockParams p;
    p.width = d;
    p.heads = heads;
    p.ln1 = LayerNormParams<T>::make(reg, name + ".ln1", d);
    p.query = LinearParams<T>::make(reg, name + ".attn.query", d, d, rng);
    p.key = LinearParams<T>::make(reg, name + ".attn.key", d, d, rng);
    p.value = LinearParams<T>::make(reg, name + ".attn.value", d, d, rng);
    p.out = LinearParams<T>::make(reg, name + ".attn.out", d, d, rng);
    p.ln2 = LayerNormParams<T>::make(reg, name + ".ln2", d);
    p.mlp_in = LinearParams<T>::make(reg, name + ".mlp.in", d, 4 * d, rng);
    p.mlp_out = LinearParams<T>::make(reg, name + ".mlp.out", 4 * d, d, rng);
    return p;
  }

  /// Zero every attention and MLP weight and bias, leaving layer norms.
  void zero_interior() {
    for (auto* lp : {&query, &key, &value, &out, &mlp_in, &mlp_out}) {
      for (auto& v : lp->weight.mutable_values()) v = T(0);
      for (auto& v : lp->bias.mutable_values()) v = T(0);
    }
  }
};

template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const AttentionBlockParams<T>& p,
                                    std::vector<T>* weights_out = nullptr) {
  if (x.rank() != 2 || x.dim(1) != p.width)
    throw DimensionMismatch("attention input " + shape_str(x.shape()) + " for width " + std::to_string(p.width));
  return p.out(attention(p.query(x), p.key(x), p.value(x), p.heads, weights_out));
}

template <typename T>
Tensor<T> mlp_block(const Tensor<T>& x, const AttentionBlockParams<T>& p) {
  return p.mlp_out(relu(p.mlp_in(x)));
}

/// Y = X + MSA(LN(X)); out = Y + MLP(LN(Y)).
template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const AttentionBlockParams<T>& p) {
  Tensor<T> y = add(x, multi_head_self_attention(p.ln1(x), p));
  return add(y, mlp_block(p.ln2(y), p));
}

template <typename T>
Tensor<T> transformer_stack(Tensor<T> x, const std::vector<AttentionBlockParams<T>>& blocks) {
  for (const auto& b : blocks) x = transformer_block(x, b);
  return x;
}

}  // namespace efv
