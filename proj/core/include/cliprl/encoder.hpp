#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cliprl/errors.hpp"
#include "cliprl/nn/layers.hpp"
#include "cliprl/tensor.hpp"
#include "cliprl/weight_file.hpp"

namespace cliprl {

struct EncoderConfig {
  int patch_size = 8;
  int embed_dim = 64;
  int num_layers = 4;
  std::vector<int> tap_layers;  // empty means every layer
  std::uint64_t weight_seed = 1234;
  std::optional<std::filesystem::path> weight_file;  // pretrained mode when set

  std::vector<int> resolved_taps() const;
  void validate() const;
};

// A G x G grid of D-dimensional features, stored channel-major as a D x G x G tensor.
template <typename T>
struct BasicFeatureMap {
  Tensor<T> grid;
  int depth_tag = -1;  // encoder layer that produced it; -1 for derived maps

  int grid_size() const noexcept { return grid.height(); }
  int dim() const noexcept { return grid.channels(); }
  T at(int row, int col, int channel) const noexcept { return grid(channel, row, col); }

  template <typename U>
  BasicFeatureMap<U> cast() const {
    return {grid.template cast<U>(), depth_tag};
  }
};

using FeatureMap = BasicFeatureMap<float>;

// Drops the leading CLS token of a (1 + G*G) x D token sequence (row-major) and lays the
// remaining tokens out row-major on a G x G grid.
template <typename T>
BasicFeatureMap<T> drop_cls_and_reshape(std::span<const T> tokens, int length, int dim,
                                        int depth_tag = -1) {
  if (length < 1 || dim < 1 || tokens.size() != static_cast<std::size_t>(length) * dim) {
    throw ShapeError("drop_cls_and_reshape: token buffer does not match " + std::to_string(length) +
                     " x " + std::to_string(dim));
  }
  const int patches = length - 1;
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(patches))));
  if (g * g != patches || g == 0) {
    throw ShapeError("drop_cls_and_reshape: sequence length " + std::to_string(length) +
                     " is not 1 + a nonzero perfect square");
  }
  BasicFeatureMap<T> fm{Tensor<T>(dim, g, g), depth_tag};
  for (int i = 0; i < patches; ++i) {
    const T* tok = tokens.data() + static_cast<std::size_t>(i + 1) * dim;
    for (int c = 0; c < dim; ++c) fm.grid(c, i / g, i % g) = tok[c];
  }
  return fm;
}

// Per-channel arithmetic mean over all grid positions.
template <typename T>
std::vector<T> global_pool(const BasicFeatureMap<T>& fm) {
  const auto n = fm.grid.plane();
  if (n == 0) throw ShapeError("global_pool: empty feature grid");
  std::vector<T> out(fm.dim());
  for (int c = 0; c < fm.dim(); ++c) {
    double s = 0.0;
    for (T v : fm.grid.channel(c)) s += static_cast<double>(v);
    out[c] = static_cast<T>(s / static_cast<double>(n));
  }
  return out;
}

// Frozen stand-in for a pretrained vision transformer: patch embedding, CLS token, learned
// position embedding and pre-norm transformer blocks (single-head attention + GELU MLP).
// Weights come either from a seeded generator or a weight file and are immutable.
class SurrogateEncoder {
 public:
  SurrogateEncoder(EncoderConfig config, int image_side);

  const EncoderConfig& config() const noexcept { return config_; }
  int image_side() const noexcept { return side_; }
  int grid_size() const noexcept { return grid_; }
  int token_count() const noexcept { return grid_ * grid_ + 1; }
  const std::vector<int>& taps() const noexcept { return taps_; }

  // One FeatureMap per tap layer, in tap order.
  std::vector<FeatureMap> encode(const Image& image) const;

  // Raw token sequence (CLS first) after the given layer; exposed for tests.
  std::vector<float> tokens_after(const Image& image, int layer) const;

  std::uint64_t weights_checksum() const;
  std::span<const NamedArray> weights() const noexcept { return weights_; }
  void export_weights(const std::filesystem::path& path) const;

 private:
  const NamedArray& weight(std::size_t index) const { return weights_[index]; }
  std::vector<float> embed(const Image& image) const;
  void run_block(std::vector<float>& x, int layer) const;
  void make_seeded_weights();
  void load_weights(const std::filesystem::path& path);
  std::vector<std::pair<std::string, std::vector<int>>> expected_layout() const;

  EncoderConfig config_;
  int side_;
  int grid_;
  std::vector<int> taps_;
  std::vector<NamedArray> weights_;
};

// Trainable fusion of multi-depth features: channel concatenation followed by a 1x1
// projection to the decoder width. Output shape depends only on (G, out_dim).
template <typename T>
class FeatureFusion {
 public:
  struct Trace {
    nn::ConvTrace<T> proj;
  };

  FeatureFusion() = default;
  FeatureFusion(int num_inputs, int in_dim, int out_dim)
      : num_inputs_(num_inputs), in_dim_(in_dim),
        proj_("fuse.proj", num_inputs * in_dim, out_dim, 1) {}

  int out_dim() const noexcept { return proj_.out_channels(); }
  int num_inputs() const noexcept { return num_inputs_; }
  nn::Conv2d<T>& projection() noexcept { return proj_; }
  const nn::Conv2d<T>& projection() const noexcept { return proj_; }
  nn::ParameterRefs<T> parameters() { return proj_.parameters(); }
  void init(Rng& rng) { proj_.init(nn::Init::kLecunUniform, rng); }

  BasicFeatureMap<T> forward(std::span<const BasicFeatureMap<T>> features, Trace* trace = nullptr) const {
    if (static_cast<int>(features.size()) != num_inputs_) {
      throw ShapeError("fuse: expected " + std::to_string(num_inputs_) + " feature maps, got " +
                       std::to_string(features.size()));
    }
    const int g = features.front().grid_size();
    Tensor<T> stacked(num_inputs_ * in_dim_, g, g);
    for (int i = 0; i < num_inputs_; ++i) {
      const auto& f = features[i].grid;
      if (f.height() != g || f.width() != g) {
        throw ShapeError("fuse: grid size mismatch " + std::to_string(g) + " vs " +
                         std::to_string(f.height()));
      }
      if (f.channels() != in_dim_) throw ShapeError("fuse: feature dimension mismatch");
      std::copy(f.data(), f.data() + f.size(), stacked.data() + static_cast<std::size_t>(i) * f.size());
    }
    return {proj_.forward(stacked, trace ? &trace->proj : nullptr), -1};
  }

  // Encoder features are constants, so only parameter gradients are produced.
  void backward(const Tensor<T>& grad_out, const Trace& trace) { proj_.backward(grad_out, trace.proj, false); }

 private:
  int num_inputs_ = 0;
  int in_dim_ = 0;
  nn::Conv2d<T> proj_;
};

}  // namespace cliprl
