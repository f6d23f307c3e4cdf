#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "efv/nn.hpp"
#include "efv/representations.hpp"
#include "efv/voxel_graph.hpp"

namespace efv {

/// Which streams feed the classifier.
enum class Mode { Fused, ImageOnly, VoxelOnly };

inline std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Fused: return "fused";
    case Mode::ImageOnly: return "image_only";
    case Mode::VoxelOnly: return "voxel_only";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "fused") return Mode::Fused;
  if (s == "image_only") return Mode::ImageOnly;
  if (s == "voxel_only") return Mode::VoxelOnly;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected fused, image_only or voxel_only)");
}

struct EfvConfig {
  std::size_t frames = 8;        // T
  std::size_t grid_h = 2;        // N = grid_h * grid_w patches per frame
  std::size_t grid_w = 4;
  std::size_t width = 64;        // d
  std::size_t heads = 4;
  std::size_t st_depth = 2;
  std::size_t fusion_depth = 1;
  std::size_t head_hidden = 256;
  std::vector<std::size_t> stem_channels{16, 32};
  std::vector<std::size_t> gmm_widths{64};  // hidden GMM layers; a final layer maps to d
  std::size_t gmm_kernels = 8;
  double radius = 2.0;
  std::size_t n_classes = 10;
  float bottleneck_std = 0.02f;

  std::size_t tokens_per_frame() const { return grid_h * grid_w; }
  std::size_t tokens() const { return frames * tokens_per_frame(); }

  void validate() const {
    if (frames == 0 || grid_h == 0 || grid_w == 0 || width == 0 || n_classes == 0 || head_hidden == 0)
      throw ConfigError("model dimensions must be positive");
    if (heads == 0 || width % heads != 0) throw ConfigError("width must be divisible by heads");
    if (!(radius > 0.0)) throw ConfigError("radius must be positive");
    if (gmm_kernels == 0) throw ConfigError("gmm_kernels must be positive");
  }

  std::size_t head_input(Mode mode) const {
    switch (mode) {
      case Mode::Fused: return (2 * tokens() + 1) * width;
      case Mode::ImageOnly: return 2 * tokens() * width;
      case Mode::VoxelOnly: return (tokens() + 1) * width;
    }
    return 0;
  }
};

/// Intermediate tensors of one forward pass; token tensors are [rows, d].
template <typename T>
struct ForwardTrace {
  Tensor<T> tokens;        // stem output + positional embedding, [T*N, d]
  Tensor<T> image;         // ST-Transformer output
  Tensor<T> fused_image;   // stage-one image half
  Tensor<T> fused_bottleneck;
  Tensor<T> voxel;         // [1, d]
  Tensor<T> stage_two;     // [T*N(+1), d]
  Tensor<T> log_probs;     // [1, n_classes]
};

/// The dual-stream classifier and all its learnable state.
template <typename T>
class EfvModel {
 public:
  EfvModel(const EfvConfig& cfg, Mode mode, std::uint64_t seed) : cfg_(cfg), mode_(mode), seed_(seed) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0x6D6F64656Cull));
    const std::size_t d = cfg_.width;
    std::size_t in = 2;
    std::vector<std::size_t> chans = cfg_.stem_channels;
    chans.push_back(d);
    for (std::size_t i = 0; i < chans.size(); ++i) {
      // He init keeps activation variance through the ReLU convs; frames are
      // sparse and small. Tiny random biases keep empty patches off the kink.
      const std::size_t fan_in = in * 9;
      const std::string name = "stem.conv" + std::to_string(i);
      stem_.push_back({params_.normal(name + ".weight", {chans[i], fan_in}, T(std::sqrt(2.0 / double(fan_in))), rng),
                       params_.uniform(name + ".bias", {chans[i]}, T(0.01), rng)});
      in = chans[i];
    }
    position_ = params_.normal("stem.position", {cfg_.tokens(), d}, T(0.02), rng);
    for (std::size_t i = 0; i < cfg_.st_depth; ++i)
      st_blocks_.push_back(AttentionBlockParams<T>::make(params_, "st." + std::to_string(i), d, cfg_.heads, rng));
    bottleneck_ = params_.normal("fusion.bottleneck", {cfg_.tokens(), d}, T(cfg_.bottleneck_std), rng);
    for (std::size_t i = 0; i < cfg_.fusion_depth; ++i)
      fusion_one_.push_back(
          AttentionBlockParams<T>::make(params_, "fusion1." + std::to_string(i), d, cfg_.heads, rng));
    for (std::size_t i = 0; i < cfg_.fusion_depth; ++i)
      fusion_two_.push_back(
          AttentionBlockParams<T>::make(params_, "fusion2." + std::to_string(i), d, cfg_.heads, rng));
    std::vector<std::size_t> widths = cfg_.gmm_widths;
    widths.push_back(d);
    voxel_ = VoxelBranch<T>::make(params_, "voxel", widths, d, cfg_.gmm_kernels, cfg_.radius, rng);
    head_hidden_ = LinearParams<T>::make(params_, "head.hidden", cfg_.head_input(mode_), cfg_.head_hidden, rng);
    head_out_ = LinearParams<T>::make(params_, "head.out", cfg_.head_hidden, cfg_.n_classes, rng);
  }

  const EfvConfig& config() const { return cfg_; }
  Mode mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }
  ParameterList<T>& parameters() { return params_; }
  const ParameterList<T>& parameters() const { return params_; }

  std::vector<AttentionBlockParams<T>>& st_blocks() { return st_blocks_; }
  std::vector<AttentionBlockParams<T>>& fusion_one_blocks() { return fusion_one_; }
  std::vector<AttentionBlockParams<T>>& fusion_two_blocks() { return fusion_two_; }
  const Tensor<T>& bottleneck() const { return bottleneck_; }
  const Tensor<T>& position() const { return position_; }
  const VoxelBranch<T>& voxel_branch() const { return voxel_; }

  /// Conv stem per frame, pooled to the patch grid, plus positional
  /// embedding. Returns [T*N, d] in frame-major token order.
  Tensor<T> stem_embed(const FrameStack& fs) const {
    if (fs.frames != cfg_.frames || fs.data.size() != fs.frames * 2 * fs.height * fs.width || fs.height == 0 ||
        fs.width == 0) {
      throw DimensionMismatch("frame stack has " + std::to_string(fs.frames) + " frames, model expects " +
                              std::to_string(cfg_.frames));
    }
    Tensor<T> x = Tensor<T>::constant({fs.frames, 2, fs.height, fs.width},
                                      std::vector<T>(fs.data.begin(), fs.data.end()));
    for (const auto& conv : stem_) x = relu(conv2d(x, conv.weight, conv.bias, 3, 3, 2, 1));
    x = adaptive_avg_pool2d(x, cfg_.grid_h, cfg_.grid_w);
    x = reshape(x, {cfg_.frames, cfg_.width, cfg_.tokens_per_frame()});
    x = reshape(transpose_last2(x), {cfg_.tokens(), cfg_.width});
    return add(x, position_);
  }

  /// Joint attention across all space-time tokens.
  Tensor<T> st_transformer(const Tensor<T>& tokens) const { return transformer_stack(tokens, st_blocks_); }

  /// [X_image; X_bottleneck] through the first fusion stack, split back.
  std::pair<Tensor<T>, Tensor<T>> fusion_stage_one(const Tensor<T>& image, const Tensor<T>& bottleneck) const {
    if (fusion_one_.empty()) return {image, bottleneck};
    const std::size_t n = image.dim(0);
    Tensor<T> f = transformer_stack(concat_rows<T>({image, bottleneck}), fusion_one_);
    return {slice_rows(f, 0, n), slice_rows(f, n, f.dim(0))};
  }

  /// [bottleneck; voxel token] through the second fusion stack. An undefined
  /// `voxel` drops the voxel token.
  Tensor<T> fusion_stage_two(const Tensor<T>& bottleneck, const Tensor<T>& voxel) const {
    Tensor<T> f = voxel.defined() ? concat_rows<T>({bottleneck, voxel}) : bottleneck;
    return transformer_stack(f, fusion_two_);
  }

  /// Flatten [stage_two; image] and classify with a two-layer MLP. An
  /// undefined `image` feeds stage_two alone.
  Tensor<T> classify_head(const Tensor<T>& stage_two, const Tensor<T>& image) const {
    Tensor<T> joined = image.defined() ? concat_rows<T>({stage_two, image}) : stage_two;
    Tensor<T> flat = reshape(joined, {1, joined.size()});
    if (flat.size() != head_hidden_.weight.dim(0)) {
      throw DimensionMismatch("head expects " + std::to_string(head_hidden_.weight.dim(0)) + " inputs, got " +
                              std::to_string(flat.size()));
    }
    return log_softmax(head_out_(relu(head_hidden_(flat))));
  }

  ForwardTrace<T> trace(const Sample& s) const {
    ForwardTrace<T> tr;
    switch (mode_) {
      case Mode::Fused: {
        tr.tokens = stem_embed(s.frames);
        tr.image = st_transformer(tr.tokens);
        std::tie(tr.fused_image, tr.fused_bottleneck) = fusion_stage_one(tr.image, bottleneck_);
        tr.voxel = voxel_(s.voxels);
        tr.stage_two = fusion_stage_two(tr.fused_bottleneck, tr.voxel);
        tr.log_probs = classify_head(tr.stage_two, tr.fused_image);
        break;
      }
      case Mode::ImageOnly: {
        tr.tokens = stem_embed(s.frames);
        tr.image = st_transformer(tr.tokens);
        std::tie(tr.fused_image, tr.fused_bottleneck) = fusion_stage_one(tr.image, bottleneck_);
        tr.stage_two = fusion_stage_two(tr.fused_bottleneck, Tensor<T>());
        tr.log_probs = classify_head(tr.stage_two, tr.fused_image);
        break;
      }
      case Mode::VoxelOnly: {
        tr.voxel = voxel_(s.voxels);
        tr.stage_two = fusion_stage_two(bottleneck_, tr.voxel);
        tr.log_probs = classify_head(tr.stage_two, Tensor<T>());
        break;
      }
    }
    return tr;
  }

  /// Log-probabilities [1, n_classes].
  Tensor<T> forward(const Sample& s) const { return trace(s).log_probs; }

  /// Same architecture and values in another precision.
  template <typename U>
  EfvModel<U> converted() const {
    EfvModel<U> out(cfg_, mode_, seed_);
    auto& dst = out.parameters().items();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      auto src = params_.items()[i].tensor.values();
      auto v = dst[i].tensor.mutable_values();
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<U>(src[k]);
    }
    return out;
  }

 private:
  EfvConfig cfg_;
  Mode mode_;
  std::uint64_t seed_;
  ParameterList<T> params_;
  std::vector<LinearParams<T>> stem_;  // conv weights [Cout, Cin*9]
  Tensor<T> position_;
  std::vector<AttentionBlockParams<T>> st_blocks_;
  Tensor<T> bottleneck_;
  std::vector<AttentionBlockParams<T>> fusion_one_;
  std::vector<AttentionBlockParams<T>> fusion_two_;
  VoxelBranch<T> voxel_;
  LinearParams<T> head_hidden_;
  LinearParams<T> head_out_;
};

}  // namespace efv
