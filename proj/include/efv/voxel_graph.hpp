#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "efv/nn.hpp"
#include "efv/representations.hpp"

namespace efv {

/// Radius graph over voxel cell coordinates. Edges are stored once with
/// i < j; `neighbors(i)` lists both directions, ascending, without i.
struct VoxelGraph {
  VoxelSet nodes;
  double radius = 0.0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<std::uint32_t> offsets;  // CSR, size n+1
  std::vector<std::uint32_t> adjacency;

  std::size_t node_count() const { return nodes.size(); }
  std::span<const std::uint32_t> neighbors(std::size_t i) const {
    return std::span(adjacency).subspan(offsets[i], offsets[i + 1] - offsets[i]);
  }
};

/// Edges join cells whose Euclidean distance is strictly below `radius`.
/// Nodes are bucketed on a grid of side ceil(radius) so only the 27
/// surrounding buckets are searched.
inline VoxelGraph build_radius_graph(const VoxelSet& vs, double radius) {
  if (!(radius > 0.0)) throw ConfigError("graph radius must be positive");
  VoxelGraph g;
  g.nodes = vs;
  g.radius = radius;
  const std::size_t n = vs.size();
  const double r2 = radius * radius;
  const auto side = static_cast<std::int64_t>(std::max(1.0, std::ceil(radius)));

  auto bucket_key = [](std::int64_t bx, std::int64_t by, std::int64_t bt) {
    return (std::uint64_t(bt + 1) << 42) | (std::uint64_t(by + 1) << 21) | std::uint64_t(bx + 1);
  };
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto& v = vs.voxels[i];
    buckets[bucket_key(v.x / side, v.y / side, v.t / side)].push_back(i);
  }

  std::vector<std::vector<std::uint32_t>> adj(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto& a = vs.voxels[i];
    const std::int64_t bx = a.x / side, by = a.y / side, bt = a.t / side;
    for (std::int64_t dt = -1; dt <= 1; ++dt)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          if (bx + dx < 0 || by + dy < 0 || bt + dt < 0) continue;
          auto it = buckets.find(bucket_key(bx + dx, by + dy, bt + dt));
          if (it == buckets.end()) continue;
          for (std::uint32_t j : it->second) {
            if (j <= i) continue;
            const auto& b = vs.voxels[j];
            const double ex = double(a.x) - double(b.x);
            const double ey = double(a.y) - double(b.y);
            const double et = double(a.t) - double(b.t);
            if (ex * ex + ey * ey + et * et < r2) {
              adj[i].push_back(j);
              adj[j].push_back(i);
            }
          }
        }
  }
  g.offsets.assign(n + 1, 0);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::sort(adj[i].begin(), adj[i].end());
    g.offsets[i + 1] = g.offsets[i] + static_cast<std::uint32_t>(adj[i].size());
    g.adjacency.insert(g.adjacency.end(), adj[i].begin(), adj[i].end());
    for (std::uint32_t j : adj[i])
      if (i < j) g.edges.emplace_back(i, j);
  }
  return g;
}

/// Gaussian-mixture graph convolution layer with M kernels over 3-D
/// pseudo-coordinates. Precision = precision_root^2 so it stays >= 0.
template <typename T>
struct GmmConvLayer {
  std::size_t kernels = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Tensor<T> means;           // [M, 3]
  Tensor<T> precision_root;  // [M, 3]
  Tensor<T> theta;           // [C_in, M * C_out], kernel m in column block m
  Tensor<T> bias;            // [C_out]

  static GmmConvLayer make(ParameterList<T>& reg, const std::string& name, std::size_t in,
                           std::size_t out, std::size_t kernels, Rng& rng) {
    GmmConvLayer l;
    l.kernels = kernels;
    l.in_channels = in;
    l.out_channels = out;
    l.means = reg.uniform(name + ".means", {kernels, 3}, T(1), rng);
    l.precision_root = reg.filled(name + ".precision_root", {kernels, 3}, T(1));
    // He init like the conv stem; the neighbourhood mean and kernel weights
    // below 1 already shrink the signal enough.
    l.theta = reg.normal(name + ".theta", {in, kernels * out}, T(std::sqrt(2.0 / double(in))), rng);
    l.bias = reg.uniform(name + ".bias", {out}, T(0.01), rng);
    return l;
  }
};

/// Kernel weight exp(-1/2 sum_k p_k (u_k - mu_k)^2).
template <typename T>
T gmm_weight(const std::array<T, 3>& u, const T* mean, const T* prec_root) {
  T q = T(0);
  for (int k = 0; k < 3; ++k) {
    const T diff = u[k] - mean[k];
    q += prec_root[k] * prec_root[k] * diff * diff;
  }
  return std::exp(T(-0.5) * q);
}

template <typename T>
std::array<T, 3> pseudo_coordinate(const VoxelGraph& g, std::size_t i, std::size_t j) {
  const auto& a = g.nodes.voxels[i];
  const auto& b = g.nodes.voxels[j];
  const T r = static_cast<T>(g.radius);
  return {(T(b.x) - T(a.x)) / r, (T(b.y) - T(a.y)) / r, (T(b.t) - T(a.t)) / r};
}

/// out_i = mean over j in N(i) + {i} of sum_m w_m(u_ij) * transformed[j, m, :].
template <typename T>
Tensor<T> gmm_aggregate(std::shared_ptr<const VoxelGraph> graph, const Tensor<T>& transformed, const Tensor<T>& means,
                        const Tensor<T>& precision_root, std::size_t out_channels) {
  const VoxelGraph& g = *graph;
  const std::size_t n = g.node_count();
  const std::size_t m = means.dim(0);
  if (transformed.rank() != 2 || transformed.dim(0) != n || transformed.dim(1) != m * out_channels ||
      precision_root.shape() != means.shape()) {
    throw DimensionMismatch("gmm_aggregate transformed " + shape_str(transformed.shape()));
  }
  const std::size_t c = out_channels;
  const T* gv = transformed.values().data();
  const T* mu = means.values().data();
  const T* pr = precision_root.values().data();
  std::vector<T> out(n * c, T(0));
  auto for_each_pair = [&g](std::size_t i, auto&& fn) {
    fn(i);
    for (std::uint32_t j : g.neighbors(i)) fn(j);
  };
  for (std::size_t i = 0; i < n; ++i) {
    T* oi = out.data() + i * c;
    for_each_pair(i, [&](std::size_t j) {
      const auto u = pseudo_coordinate<T>(g, i, j);
      for (std::size_t k = 0; k < m; ++k) {
        const T w = gmm_weight(u, mu + 3 * k, pr + 3 * k);
        const T* src = gv + (j * m + k) * c;
        for (std::size_t ch = 0; ch < c; ++ch) oi[ch] += w * src[ch];
      }
    });
    const T inv = T(1) / T(g.neighbors(i).size() + 1);
    for (std::size_t ch = 0; ch < c; ++ch) oi[ch] *= inv;
  }
  return Tensor<T>::from_op(
      {n, c}, std::move(out), {transformed.node(), means.node(), precision_root.node()},
      [graph, n, m, c](Node<T>& self) {
        const VoxelGraph& g = *graph;
        auto for_each_pair = [&g](std::size_t i, auto&& fn) {
          fn(i);
          for (std::uint32_t j : g.neighbors(i)) fn(j);
        };
        const T* gv = self.parents[0]->value.data();
        const T* mu = self.parents[1]->value.data();
        const T* pr = self.parents[2]->value.data();
        T* d_tr = grad_of(self, 0);
        T* d_mu = grad_of(self, 1);
        T* d_pr = grad_of(self, 2);
        for (std::size_t i = 0; i < n; ++i) {
          const T inv = T(1) / T(g.neighbors(i).size() + 1);
          const T* gi = self.grad.data() + i * c;
          for_each_pair(i, [&](std::size_t j) {
            const auto u = pseudo_coordinate<T>(g, i, j);
            for (std::size_t k = 0; k < m; ++k) {
              const T w = gmm_weight(u, mu + 3 * k, pr + 3 * k);
              const T* src = gv + (j * m + k) * c;
              if (d_tr) {
                T* dst = d_tr + (j * m + k) * c;
                for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += w * inv * gi[ch];
              }
              if (d_mu || d_pr) {
                T dw = T(0);
                for (std::size_t ch = 0; ch < c; ++ch) dw += gi[ch] * src[ch];
                dw *= inv * w;
                for (int a = 0; a < 3; ++a) {
                  const T diff = u[a] - mu[3 * k + a];
                  const T s = pr[3 * k + a];
                  if (d_mu) d_mu[3 * k + a] += dw * s * s * diff;
                  if (d_pr) d_pr[3 * k + a] -= dw * diff * diff * s;
                }
              }
            }
          });
        }
      });
}

/// One graph convolution: ReLU(aggregate(f Theta) + b).
template <typename T>
Tensor<T> gmm_conv(const std::shared_ptr<const VoxelGraph>& graph, const GmmConvLayer<T>& layer,
                   const Tensor<T>& features) {
  const VoxelGraph& g = *graph;
  if (features.rank() != 2 || features.dim(0) != g.node_count() || features.dim(1) != layer.in_channels) {
    throw DimensionMismatch("gmm_conv features " + shape_str(features.shape()) + " for " +
                            std::to_string(g.node_count()) + " nodes x " + std::to_string(layer.in_channels));
  }
  Tensor<T> transformed = matmul(features, layer.theta);
  return relu(add_bias(gmm_aggregate(graph, transformed, layer.means, layer.precision_root, layer.out_channels),
                       layer.bias));
}

/// Convenience overload; copies the graph into the computation record.
template <typename T>
Tensor<T> gmm_conv(const VoxelGraph& g, const GmmConvLayer<T>& layer, const Tensor<T>& features) {
  return gmm_conv(std::make_shared<const VoxelGraph>(g), layer, features);
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& features) {
  if (features.rank() != 2 || features.dim(0) == 0) throw EmptyGraph("average pooling over an empty graph");
  return mean_rows(features);
}

template <typename T>
Tensor<T> voxel_feature_matrix(const VoxelSet& vs) {
  std::vector<T> v;
  v.reserve(vs.size() * kVoxelFeatures);
  for (const auto& vox : vs.voxels)
    for (float f : vox.feature) v.push_back(static_cast<T>(f));
  return Tensor<T>::constant({vs.size(), kVoxelFeatures}, std::move(v));
}

/// Voxel stream encoder: radius graph, stacked GMM convolutions, mean
/// pooling, projection to the model width. Returns [1, d].
template <typename T>
struct VoxelBranch {
  std::vector<GmmConvLayer<T>> layers;
  LinearParams<T> projection;
  double radius = 2.0;

  static VoxelBranch make(ParameterList<T>& reg, const std::string& name, const std::vector<std::size_t>& widths,
                          std::size_t d, std::size_t kernels, double radius, Rng& rng) {
    VoxelBranch b;
    b.radius = radius;
    std::size_t in = kVoxelFeatures;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      b.layers.push_back(GmmConvLayer<T>::make(reg, name + ".gmm" + std::to_string(i), in, widths[i], kernels, rng));
      in = widths[i];
    }
    b.projection = LinearParams<T>::make(reg, name + ".projection", in, d, rng);
    return b;
  }

  Tensor<T> operator()(const VoxelSet& vs) const {
    if (vs.empty()) throw EmptyGraph("voxel branch needs at least one voxel");
    auto graph = std::make_shared<const VoxelGraph>(build_radius_graph(vs, radius));
    Tensor<T> f = voxel_feature_matrix<T>(vs);
    for (const auto& l : layers) f = gmm_conv(graph, l, f);
    return projection(avg_pool(f));
  }
};

}  // namespace efv
