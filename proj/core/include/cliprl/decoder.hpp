#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cliprl/encoder.hpp"
#include "cliprl/errors.hpp"
#include "cliprl/nn/layers.hpp"
#include "cliprl/tensor.hpp"

namespace cliprl {

// K x H x W pre-softmax class scores.
template <typename T>
using LogitMap = Tensor<T>;
// K x H x W per-pixel class distributions.
template <typename T>
using ProbMap = Tensor<T>;

enum class SkipSource { kNone, kTap, kImage };

struct StageSkip {
  SkipSource source = SkipSource::kNone;
  int tap_index = -1;  // index into the encoder's tap list when source == kTap
  int channels = 0;
};

struct DecoderConfig {
  int grid_size = 8;      // G of the fused feature map
  int image_side = 64;
  int fused_dim = 64;     // D_dec
  int min_channels = 32;  // floor of the halving channel schedule
  int num_classes = 4;
  int num_taps = 4;
  int tap_dim = 64;
  bool use_skips = true;

  // log2(image_side / grid_size); throws ConfigError when not an exact power of two.
  int num_stages() const;
  std::vector<int> stage_channels() const;
  // Skip source per stage: the candidate (tap grid at G, or the input image at full
  // side) whose resolution is nearest in octaves to the stage output; ties go to taps.
  std::vector<StageSkip> skip_plan() const;
  void validate() const;
};

inline int DecoderConfig::num_stages() const {
  if (grid_size < 1 || image_side < grid_size || image_side % grid_size != 0) {
    throw ConfigError("decoder: grid " + std::to_string(grid_size) + " cannot reach image side " +
                      std::to_string(image_side) + " by doubling");
  }
  const int ratio = image_side / grid_size;
  if ((ratio & (ratio - 1)) != 0) {
    throw ConfigError("decoder: grid " + std::to_string(grid_size) + " * 2^stages never equals " +
                      std::to_string(image_side));
  }
  int stages = 0;
  while ((grid_size << stages) < image_side) ++stages;
  return stages;
}

inline std::vector<int> DecoderConfig::stage_channels() const {
  std::vector<int> ch;
  int c = fused_dim;
  for (int s = 0; s < num_stages(); ++s) {
    c = std::max(min_channels, c / 2);
    ch.push_back(c);
  }
  return ch;
}

inline std::vector<StageSkip> DecoderConfig::skip_plan() const {
  const int stages = num_stages();
  std::vector<StageSkip> plan(stages);
  if (!use_skips) return plan;
  std::vector<int> tap_stages;
  for (int s = 0; s < stages; ++s) {
    const int res = grid_size << (s + 1);
    const double tap_dist = std::abs(std::log2(static_cast<double>(res) / grid_size));
    const double img_dist = std::abs(std::log2(static_cast<double>(image_side) / res));
    if (num_taps > 0 && tap_dist <= img_dist) {
      plan[s] = {SkipSource::kTap, -1, tap_dim};
      tap_stages.push_back(s);
    } else {
      plan[s] = {SkipSource::kImage, -1, 3};
    }
  }
  // Finer tap-fed stages take shallower taps.
  const int m = static_cast<int>(tap_stages.size());
  for (int j = 0; j < m; ++j) plan[tap_stages[j]].tap_index = std::min(num_taps - 1, m - 1 - j);
  return plan;
}

inline void DecoderConfig::validate() const {
  if (num_classes < 2) throw ConfigError("decoder: num_classes must be >= 2");
  if (fused_dim < 1 || min_channels < 1) throw ConfigError("decoder: channel counts must be positive");
  (void)num_stages();
}

// Per-channel zero-mean / unit-variance copy of `x` (constant channels map to zero).
template <typename T>
Tensor<T> standardize_channels(const Tensor<T>& x) {
  Tensor<T> out = x;
  const std::size_t n = x.plane();
  for (int c = 0; c < x.channels(); ++c) {
    T* v = out.data() + c * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += v[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (v[i] - mean) * (v[i] - mean);
    var /= static_cast<double>(n);
    const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>((v[i] - mean) * inv);
  }
  return out;
}

// Multi-stage x2 upsampling decoder: each stage is a kernel-2/stride-2 transposed
// convolution, an optional skip concatenation, and two 3x3 conv + ReLU refinements.
// A final 1x1 convolution maps to class logits.
template <typename T>
class Decoder {
 public:
  struct StageTrace {
    nn::ConvTrace<T> up;
    nn::ConvTrace<T> conv1;
    nn::ConvTrace<T> conv2;
    Tensor<T> act1;
    Tensor<T> act2;
    int up_channels = 0;
  };
  struct Trace {
    std::vector<StageTrace> stages;
    nn::ConvTrace<T> head;
  };

  Decoder() = default;
  explicit Decoder(DecoderConfig config) : config_(config) {
    config_.validate();
    plan_ = config_.skip_plan();
    const auto ch = config_.stage_channels();
    int in = config_.fused_dim;
    for (std::size_t s = 0; s < ch.size(); ++s) {
      const std::string p = "decoder.stage" + std::to_string(s);
      Stage st;
      st.up = nn::ConvTranspose2x2<T>(p + ".up", in, ch[s]);
      st.conv1 = nn::Conv2d<T>(p + ".conv1", ch[s] + plan_[s].channels, ch[s], 3);
      st.conv2 = nn::Conv2d<T>(p + ".conv2", ch[s], ch[s], 3);
      stages_.push_back(std::move(st));
      in = ch[s];
    }
    head_ = nn::Conv2d<T>("decoder.head", in, config_.num_classes, 1);
  }

  const DecoderConfig& config() const noexcept { return config_; }
  int num_stages() const noexcept { return static_cast<int>(stages_.size()); }
  const std::vector<StageSkip>& skip_plan() const noexcept { return plan_; }
  nn::Conv2d<T>& head() noexcept { return head_; }

  nn::ParameterRefs<T> parameters() {
    nn::ParameterRefs<T> out;
    for (auto& st : stages_)
      for (auto* layer_params : {&st.up.weight(), &st.up.bias(), &st.conv1.weight(), &st.conv1.bias(),
                                 &st.conv2.weight(), &st.conv2.bias()})
        out.push_back(layer_params);
    out.push_back(&head_.weight());
    out.push_back(&head_.bias());
    return out;
  }

  void init(Rng& rng) {
    for (auto& st : stages_) {
      st.up.init(nn::Init::kHeUniform, rng);
      st.conv1.init(nn::Init::kHeUniform, rng);
      st.conv2.init(nn::Init::kHeUniform, rng);
    }
    head_.init(nn::Init::kLecunUniform, rng);
  }

  // Builds the per-stage skip tensors (resized to each stage's resolution) from the
  // encoder taps and the input image. Empty tensors mark stages without a skip.
  std::vector<Tensor<T>> prepare_skips(std::span<const BasicFeatureMap<T>> taps, const Tensor<T>& image) const {
    std::vector<Tensor<T>> out(stages_.size());
    const Tensor<T> standardized = standardize_channels(image);
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const int res = config_.grid_size << (s + 1);
      switch (plan_[s].source) {
        case SkipSource::kNone: break;
        case SkipSource::kTap:
          if (plan_[s].tap_index >= static_cast<int>(taps.size())) {
            throw ShapeError("decoder: skip plan needs tap " + std::to_string(plan_[s].tap_index));
          }
          out[s] = nn::resize_bilinear(taps[plan_[s].tap_index].grid, res, res);
          break;
        case SkipSource::kImage:
          out[s] = nn::resize_bilinear(standardized, res, res);
          break;
      }
    }
    return out;
  }

  // Returns the argument of the pixelwise softmax (logits z_L).
  LogitMap<T> forward(const BasicFeatureMap<T>& fused, std::span<const Tensor<T>> skips,
                      Trace* trace = nullptr) const {
    if (fused.grid_size() != config_.grid_size || fused.dim() != config_.fused_dim) {
      throw ShapeError("decoder: expected fused map " + std::to_string(config_.fused_dim) + "x" +
                       std::to_string(config_.grid_size) + "x" + std::to_string(config_.grid_size) +
                       ", got " + fused.grid.shape_string());
    }
    if (skips.size() != stages_.size()) {
      throw ShapeError("decoder: expected " + std::to_string(stages_.size()) + " skip entries");
    }
    if (trace) trace->stages.assign(stages_.size(), {});
    Tensor<T> x = fused.grid;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const auto& st = stages_[s];
      StageTrace* tr = trace ? &trace->stages[s] : nullptr;
      x = st.up.forward(x, tr ? &tr->up : nullptr);
      if (tr) tr->up_channels = x.channels();
      if (plan_[s].source != SkipSource::kNone) {
        const auto& skip = skips[s];
        if (skip.channels() != plan_[s].channels || skip.height() != x.height() || skip.width() != x.width()) {
          throw ShapeError("decoder stage " + std::to_string(s) + ": skip tensor " + skip.shape_string() +
                           " does not match " + std::to_string(plan_[s].channels) + "x" +
                           std::to_string(x.height()) + "x" + std::to_string(x.width()));
        }
        x = concat_channels(x, skip);
      }
      x = st.conv1.forward(x, tr ? &tr->conv1 : nullptr);
      nn::relu_inplace(x.values());
      if (tr) tr->act1 = x;
      x = st.conv2.forward(x, tr ? &tr->conv2 : nullptr);
      nn::relu_inplace(x.values());
      if (tr) tr->act2 = x;
    }
    return head_.forward(x, trace ? &trace->head : nullptr);
  }

  // Accumulates parameter gradients and returns d(loss)/d(fused grid).
  Tensor<T> backward(const LogitMap<T>& grad_logits, const Trace& trace) {
    Tensor<T> g = head_.backward(grad_logits, trace.head, true);
    for (int s = num_stages() - 1; s >= 0; --s) {
      auto& st = stages_[s];
      const auto& tr = trace.stages[s];
      nn::relu_backward_inplace(g.values(), tr.act2.values());
      g = st.conv2.backward(g, tr.conv2, true);
      nn::relu_backward_inplace(g.values(), tr.act1.values());
      g = st.conv1.backward(g, tr.conv1, true);
      if (plan_[s].source != SkipSource::kNone) {
        Tensor<T> up_grad(tr.up_channels, g.height(), g.width());
        std::copy(g.data(), g.data() + up_grad.size(), up_grad.data());
        g = std::move(up_grad);
      }
      g = st.up.backward(g, tr.up, true);
    }
    return g;
  }

 private:
  struct Stage {
    nn::ConvTranspose2x2<T> up;
    nn::Conv2d<T> conv1;
    nn::Conv2d<T> conv2;
  };

  DecoderConfig config_;
  std::vector<StageSkip> plan_;
  std::vector<Stage> stages_;
  nn::Conv2d<T> head_;
};

// Max-subtracted softmax over the class axis at every pixel.
template <typename T>
ProbMap<T> softmax_pixelwise(const LogitMap<T>& logits) {
  const int k = logits.channels();
  const std::size_t n = logits.plane();
  ProbMap<T> probs(k, logits.height(), logits.width());
  const T* z = logits.data();
  T* p = probs.data();
  for (std::size_t i = 0; i < n; ++i) {
    T m = z[i];
    for (int c = 0; c < k; ++c) {
      const T v = z[c * n + i];
      if (std::isnan(v)) throw NumericError("softmax_pixelwise: NaN logit");
      m = std::max(m, v);
    }
    if (!std::isfinite(m)) throw NumericError("softmax_pixelwise: non-finite logit");
    T sum = 0;
    for (int c = 0; c < k; ++c) {
      const T e = std::exp(z[c * n + i] - m);
      p[c * n + i] = e;
      sum += e;
    }
    for (int c = 0; c < k; ++c) p[c * n + i] /= sum;
  }
  return probs;
}

// Per-pixel argmax over classes; ties resolve to the lowest class id.
template <typename T>
Mask argmax_classes(const Tensor<T>& scores) {
  const std::size_t n = scores.plane();
  Mask out(scores.height(), scores.width());
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    T best_v = scores.data()[i];
    for (int c = 1; c < scores.channels(); ++c) {
      const T v = scores.data()[c * n + i];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out.labels[i] = best;
  }
  return out;
}

}  // namespace cliprl
