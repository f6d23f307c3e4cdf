#pragma once

// Differentiable primitives over Tensor<T>. All matrices are row-major and
// "rows" means every axis but the last.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "efv/tensor.hpp"

namespace efv {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionMismatch(what);
}

template <typename T>
std::size_t last_dim(const Tensor<T>& x) {
  require(x.rank() >= 1, "tensor must have rank >= 1");
  return x.shape().back();
}

// C[n,m] += A[n,k] * B[k,m]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    T* ci = c + i * m;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T(0)) continue;
      const T* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[n,k] += A[n,m] * B[k,m]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t n, std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T* bp = b + p * m;
      T acc = T(0);
      for (std::size_t j = 0; j < m; ++j) acc += ai[j] * bp[j];
      c[i * k + p] += acc;
    }
  }
}

// C[k,m] += A[n,k]^T * B[n,m]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T(0)) continue;
      T* cp = c + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                  "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<T> out(n * m, T(0));
  detail::gemm_nn(a.values().data(), b.values().data(), out.data(), n, k, m);
  return Tensor<T>::from_op({n, m}, std::move(out), {a.node(), b.node()}, [n, k, m](Node<T>& self) {
    const T* g = self.grad.data();
    if (T* ga = grad_of(self, 0)) detail::gemm_nt(g, self.parents[1]->value.data(), ga, n, m, k);
    if (T* gb = grad_of(self, 1)) detail::gemm_tn(self.parents[0]->value.data(), g, gb, n, k, m);
  });
}

/// Affine map over the last axis: x[*, n] W[n, m] + b[m].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t k = detail::last_dim(x);
  detail::require(w.rank() == 2 && w.dim(0) == k && b.rank() == 1 && b.dim(0) == w.dim(1),
                  "linear x" + shape_str(x.shape()) + " W" + shape_str(w.shape()) + " b" +
                      shape_str(b.shape()));
  const std::size_t m = w.dim(1), n = x.size() / k;
  std::vector<T> out(n * m);
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * m);
  detail::gemm_nn(x.values().data(), w.values().data(), out.data(), n, k, m);
  Shape shape = x.shape();
  shape.back() = m;
  return Tensor<T>::from_op(std::move(shape), std::move(out), {x.node(), w.node(), b.node()},
                            [n, k, m](Node<T>& self) {
                              const T* g = self.grad.data();
                              if (T* gx = grad_of(self, 0))
                                detail::gemm_nt(g, self.parents[1]->value.data(), gx, n, m, k);
                              if (T* gw = grad_of(self, 1))
                                detail::gemm_tn(self.parents[0]->value.data(), g, gw, n, k, m);
                              if (T* gb = grad_of(self, 2)) {
                                for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
                              }
                            });
}

/// x[*, m] + b[m] broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  const std::size_t m = detail::last_dim(x);
  detail::require(b.rank() == 1 && b.dim(0) == m, "add_bias " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
  std::vector<T> out(x.values().begin(), x.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % m];
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node(), b.node()}, [m](Node<T>& self) {
    const auto& g = self.grad;
    if (T* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    if (T* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % m] += g[i];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  std::vector<T> out(a.size());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    const auto& g = self.grad;
    for (std::size_t p = 0; p < 2; ++p)
      if (T* gp = grad_of(self, p))
        for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= s;
  return Tensor<T>::from_op(a.shape(), std::move(out), {a.node()}, [s](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += s * self.grad[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  if (detail::kink_sink())
    for (auto v : out) detail::record_kink_side(v > T(0));
  return Tensor<T>::from_op(a.shape(), std::move(out), {a.node()}, [](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (self.value[i] > T(0)) ga[i] += self.grad[i];
  });
}

/// Per-row standardization over the last axis followed by gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  const std::size_t d = detail::last_dim(x);
  detail::require(gamma.shape() == Shape{d} && beta.shape() == Shape{d},
                  "layer_norm width " + std::to_string(d));
  const std::size_t n = x.size() / d;
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(n);
  std::vector<T> out(x.size());
  const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = xv.data() + i * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mean) * is;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = h * gv[j] + bv[j];
    }
  }
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
      [n, d, xhat, inv_std](Node<T>& self) {
        const T* g = self.grad.data();
        const T* gam = self.parents[1]->value.data();
        if (T* gg = grad_of(self, 1))
          for (std::size_t i = 0; i < n * d; ++i) gg[i % d] += g[i] * (*xhat)[i];
        if (T* gb = grad_of(self, 2))
          for (std::size_t i = 0; i < n * d; ++i) gb[i % d] += g[i];
        if (T* gx = grad_of(self, 0)) {
          for (std::size_t i = 0; i < n; ++i) {
            T mean_dh = T(0), mean_dh_h = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = g[i * d + j] * gam[j];
              mean_dh += dh;
              mean_dh_h += dh * (*xhat)[i * d + j];
            }
            mean_dh /= T(d);
            mean_dh_h /= T(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = g[i * d + j] * gam[j];
              gx[i * d + j] += (*inv_std)[i] * (dh - mean_dh - (*xhat)[i * d + j] * mean_dh_h);
            }
          }
        }
      });
}

namespace detail {
template <typename T>
void softmax_row(const T* in, T* out, std::size_t m) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, in[j]);
  T sum = T(0);
  for (std::size_t j = 0; j < m; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  for (std::size_t j = 0; j < m; ++j) out[j] /= sum;
}
}  // namespace detail

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t m = detail::last_dim(x), n = x.size() / m;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < n; ++i) detail::softmax_row(x.values().data() + i * m, out.data() + i * m, m);
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node()}, [n, m](Node<T>& self) {
    T* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < n; ++i) {
      const T* p = self.value.data() + i * m;
      const T* g = self.grad.data() + i * m;
      T dot = T(0);
      for (std::size_t j = 0; j < m; ++j) dot += p[j] * g[j];
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += p[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t m = detail::last_dim(x), n = x.size() / m;
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = xv.data() + i * m;
    T mx = *std::max_element(row, row + m);
    T sum = T(0);
    for (std::size_t j = 0; j < m; ++j) sum += std::exp(row[j] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = row[j] - lse;
  }
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node()}, [n, m](Node<T>& self) {
    T* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < n; ++i) {
      const T* lp = self.value.data() + i * m;
      const T* g = self.grad.data() + i * m;
      T gsum = T(0);
      for (std::size_t j = 0; j < m; ++j) gsum += g[j];
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += g[j] - std::exp(lp[j]) * gsum;
    }
  });
}

/// Mean over the batch of -log_probs[b, targets[b]].
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& log_probs, std::span<const int> targets) {
  detail::require(log_probs.rank() == 2 && log_probs.dim(0) == targets.size(),
                  "nll_loss " + shape_str(log_probs.shape()) + " with " +
                      std::to_string(targets.size()) + " targets");
  const std::size_t b = log_probs.dim(0), m = log_probs.dim(1);
  std::vector<int> tg(targets.begin(), targets.end());
  for (int t : tg) detail::require(t >= 0 && static_cast<std::size_t>(t) < m, "nll_loss target out of range");
  T loss = T(0);
  for (std::size_t i = 0; i < b; ++i) loss -= log_probs.values()[i * m + tg[i]];
  loss /= T(b);
  return Tensor<T>::from_op({}, {loss}, {log_probs.node()}, [b, m, tg](Node<T>& self) {
    if (T* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < b; ++i) gx[i * m + tg[i]] -= self.grad[0] / T(b);
  });
}

/// Scaled dot-product attention with `heads` heads over q, k, v of shape
/// [S, d]; head h uses columns [h*d/heads, (h+1)*d/heads). If `weights_out`
/// is given it receives the [heads, S, S] attention matrices.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                    std::vector<T>* weights_out = nullptr) {
  detail::require(q.rank() == 2 && q.shape() == k.shape() && q.shape() == v.shape(),
                  "attention q" + shape_str(q.shape()) + " k" + shape_str(k.shape()) + " v" +
                      shape_str(v.shape()));
  const std::size_t s = q.dim(0), d = q.dim(1);
  detail::require(heads >= 1 && d % heads == 0, "attention width not divisible by heads");
  const std::size_t dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  auto probs = std::make_shared<std::vector<T>>(heads * s * s);
  std::vector<T> out(s * d, T(0));
  const T* qv = q.values().data();
  const T* kv = k.values().data();
  const T* vv = v.values().data();
  std::vector<T> logits(s);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        T acc = T(0);
        for (std::size_t c = 0; c < dh; ++c) acc += qv[i * d + off + c] * kv[j * d + off + c];
        logits[j] = acc * sc;
      }
      T* p = probs->data() + (h * s + i) * s;
      detail::softmax_row(logits.data(), p, s);
      T* o = out.data() + i * d + off;
      for (std::size_t j = 0; j < s; ++j) {
        const T pj = p[j];
        const T* vj = vv + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) o[c] += pj * vj[c];
      }
    }
  }
  if (weights_out) *weights_out = *probs;
  return Tensor<T>::from_op(
      {s, d}, std::move(out), {q.node(), k.node(), v.node()},
      [s, d, heads, dh, sc, probs](Node<T>& self) {
        const T* g = self.grad.data();
        const T* qv = self.parents[0]->value.data();
        const T* kv = self.parents[1]->value.data();
        const T* vv = self.parents[2]->value.data();
        T* gq = grad_of(self, 0);
        T* gk = grad_of(self, 1);
        T* gv = grad_of(self, 2);
        std::vector<T> dz(s);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < s; ++i) {
            const T* p = probs->data() + (h * s + i) * s;
            const T* gi = g + i * d + off;
            T dot = T(0);
            for (std::size_t j = 0; j < s; ++j) {
              T dp = T(0);
              const T* vj = vv + j * d + off;
              for (std::size_t c = 0; c < dh; ++c) dp += gi[c] * vj[c];
              dz[j] = dp;
              dot += p[j] * dp;
              if (gv) {
                T* gvj = gv + j * d + off;
                for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * gi[c];
              }
            }
            for (std::size_t j = 0; j < s; ++j) {
              const T z = p[j] * (dz[j] - dot) * sc;
              if (z == T(0)) continue;
              if (gq) {
                T* gqi = gq + i * d + off;
                const T* kj = kv + j * d + off;
                for (std::size_t c = 0; c < dh; ++c) gqi[c] += z * kj[c];
              }
              if (gk) {
                T* gkj = gk + j * d + off;
                const T* qi = qv + i * d + off;
                for (std::size_t c = 0; c < dh; ++c) gkj[c] += z * qi[c];
              }
            }
          }
        }
      });
}

/// Stack [n_i, d] tensors along the first axis.
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows of nothing");
  const std::size_t d = parts.front().rank() == 2 ? parts.front().dim(1) : 0;
  std::size_t rows = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    detail::require(p.rank() == 2 && p.dim(1) == d, "concat_rows width mismatch at " + shape_str(p.shape()));
    offsets.push_back(rows * d);
    rows += p.dim(0);
    parents.push_back(p.node());
  }
  std::vector<T> out;
  out.reserve(rows * d);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor<T>::from_op({rows, d}, std::move(out), std::move(parents), [offsets](Node<T>& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (T* gp = grad_of(self, p)) {
        const std::size_t len = self.parents[p]->value.size();
        for (std::size_t i = 0; i < len; ++i) gp[i] += self.grad[offsets[p] + i];
      }
    }
  });
}

/// Rows [begin, end) of a rank-2 tensor.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  detail::require(x.rank() == 2 && begin <= end && end <= x.dim(0), "slice_rows out of range");
  const std::size_t d = x.dim(1);
  std::vector<T> out(x.values().begin() + begin * d, x.values().begin() + end * d);
  return Tensor<T>::from_op({end - begin, d}, std::move(out), {x.node()}, [begin, d](Node<T>& self) {
    if (T* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[begin * d + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::require(numel(shape) == x.size(), "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<T> out(x.values().begin(), x.values().end());
  return Tensor<T>::from_op(std::move(shape), std::move(out), {x.node()}, [](Node<T>& self) {
    if (T* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

/// [B, R, C] -> [B, C, R]
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  detail::require(x.rank() == 3, "transpose_last2 expects rank 3");
  const std::size_t b = x.dim(0), r = x.dim(1), c = x.dim(2);
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[(n * c + j) * r + i] = xv[(n * r + i) * c + j];
  return Tensor<T>::from_op({b, c, r}, std::move(out), {x.node()}, [b, r, c](Node<T>& self) {
    if (T* gx = grad_of(self, 0))
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gx[(n * r + i) * c + j] += self.grad[(n * c + j) * r + i];
  });
}

/// Mean over the first axis of a [n, d] tensor, giving [1, d].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  detail::require(x.rank() == 2, "mean_rows expects rank 2");
  const std::size_t n = x.dim(0), d = x.dim(1);
  detail::require(n >= 1, "mean_rows of zero rows");
  std::vector<T> out(d, T(0));
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += xv[i * d + j];
  for (auto& v : out) v /= T(n);
  return Tensor<T>::from_op({1, d}, std::move(out), {x.node()}, [n, d](Node<T>& self) {
    if (T* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += self.grad[j] / T(n);
  });
}

/// Sum of x weighted elementwise by fixed coefficients; a generic scalar probe.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::vector<T> coeffs) {
  detail::require(coeffs.size() == x.size(), "weighted_sum size mismatch");
  T acc = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) acc += coeffs[i] * x.values()[i];
  return Tensor<T>::from_op({}, {acc}, {x.node()}, [c = std::move(coeffs)](Node<T>& self) {
    if (T* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < c.size(); ++i) gx[i] += c[i] * self.grad[0];
  });
}

/// 2-D convolution. x: [B, Cin, H, W]; w: [Cout, Cin*kh*kw]; b: [Cout].
/// Output [B, Cout, Ho, Wo] with Ho = (H + 2*pad - kh) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t kh,
                 std::size_t kw, std::size_t stride, std::size_t pad) {
  detail::require(x.rank() == 4, "conv2d expects [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t bs = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t kk = cin * kh * kw;
  detail::require(w.rank() == 2 && w.dim(1) == kk && b.rank() == 1 && b.dim(0) == w.dim(0),
                  "conv2d weight " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  detail::require(h + 2 * pad >= kh && wd + 2 * pad >= kw, "conv2d input smaller than kernel");
  const std::size_t cout = w.dim(0);
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
  const std::size_t npix = ho * wo;
  // im2col per image: col[kk, npix]
  auto cols = std::make_shared<std::vector<T>>(bs * kk * npix, T(0));
  const auto xv = x.values();
  for (std::size_t n = 0; n < bs; ++n) {
    T* col = cols->data() + n * kk * npix;
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          T* row = col + ((c * kh + ky) * kw + kx) * npix;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
            if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(pad);
              if (ix < 0 || ix >= std::ptrdiff_t(wd)) continue;
              row[oy * wo + ox] = xv[((n * cin + c) * h + iy) * wd + ix];
            }
          }
        }
  }
  std::vector<T> out(bs * cout * npix);
  const auto bv = b.values();
  for (std::size_t n = 0; n < bs; ++n) {
    T* o = out.data() + n * cout * npix;
    for (std::size_t co = 0; co < cout; ++co) std::fill(o + co * npix, o + (co + 1) * npix, bv[co]);
    detail::gemm_nn(w.values().data(), cols->data() + n * kk * npix, o, cout, kk, npix);
  }
  return Tensor<T>::from_op(
      {bs, cout, ho, wo}, std::move(out), {x.node(), w.node(), b.node()},
      [=](Node<T>& self) {
        const T* g = self.grad.data();
        if (T* gw = grad_of(self, 1))
          for (std::size_t n = 0; n < bs; ++n)
            detail::gemm_nt(g + n * cout * npix, cols->data() + n * kk * npix, gw, cout, npix, kk);
        if (T* gb = grad_of(self, 2))
          for (std::size_t n = 0; n < bs; ++n)
            for (std::size_t co = 0; co < cout; ++co)
              for (std::size_t p = 0; p < npix; ++p) gb[co] += g[(n * cout + co) * npix + p];
        if (T* gx = grad_of(self, 0)) {
          std::vector<T> dcol(kk * npix);
          const T* wv = self.parents[1]->value.data();
          for (std::size_t n = 0; n < bs; ++n) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            detail::gemm_tn(wv, g + n * cout * npix, dcol.data(), cout, kk, npix);
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const T* row = dcol.data() + ((c * kh + ky) * kw + kx) * npix;
                  for (std::size_t oy = 0; oy < ho; ++oy) {
                    const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
                    if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                      const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(pad);
                      if (ix < 0 || ix >= std::ptrdiff_t(wd)) continue;
                      gx[((n * cin + c) * h + iy) * wd + ix] += row[oy * wo + ox];
                    }
                  }
                }
          }
        }
      });
}

/// Adaptive average pooling [B, C, H, W] -> [B, C, oh, ow]; bin i covers
/// [floor(i*H/oh), ceil((i+1)*H/oh)).
template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, std::size_t oh, std::size_t ow) {
  detail::require(x.rank() == 4 && oh >= 1 && ow >= 1, "adaptive_avg_pool2d expects [B,C,H,W]");
  const std::size_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  auto bin = [](std::size_t i, std::size_t in, std::size_t out) {
    return std::pair{i * in / out, ((i + 1) * in + out - 1) / out};
  };
  std::vector<T> out(bc * oh * ow, T(0));
  const auto xv = x.values();
  for (std::size_t n = 0; n < bc; ++n)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        auto [y0, y1] = bin(i, h, oh);
        auto [x0, x1] = bin(j, w, ow);
        T acc = T(0);
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t xx = x0; xx < x1; ++xx) acc += xv[(n * h + y) * w + xx];
        out[(n * oh + i) * ow + j] = acc / T((y1 - y0) * (x1 - x0));
      }
  return Tensor<T>::from_op({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x.node()},
                            [=](Node<T>& self) {
                              T* gx = grad_of(self, 0);
                              if (!gx) return;
                              for (std::size_t n = 0; n < bc; ++n)
                                for (std::size_t i = 0; i < oh; ++i)
                                  for (std::size_t j = 0; j < ow; ++j) {
                                    auto [y0, y1] = bin(i, h, oh);
                                    auto [x0, x1] = bin(j, w, ow);
                                    const T g = self.grad[(n * oh + i) * ow + j] / T((y1 - y0) * (x1 - x0));
                                    for (std::size_t y = y0; y < y1; ++y)
                                      for (std::size_t xx = x0; xx < x1; ++xx) gx[(n * h + y) * w + xx] += g;
                                  }
                            });
}

}  // namespace efv
