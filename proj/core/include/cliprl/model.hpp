#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "cliprl/decoder.hpp"
#include "cliprl/encoder.hpp"
#include "cliprl/rl_refine.hpp"
#include "cliprl/weight_file.hpp"

namespace cliprl {

struct ModelConfig {
  EncoderConfig encoder;
  int image_side = 64;
  int num_classes = 4;
  int fused_dim = 64;
  int min_channels = 32;
  bool use_skips = true;
  ActionSpace actions;

  DecoderConfig decoder_config() const {
    DecoderConfig d;
    d.grid_size = image_side / encoder.patch_size;
    d.image_side = image_side;
    d.fused_dim = fused_dim;
    d.min_channels = min_channels;
    d.num_classes = num_classes;
    d.num_taps = static_cast<int>(encoder.resolved_taps().size());
    d.tap_dim = encoder.embed_dim;
    d.use_skips = use_skips;
    return d;
  }
};

// Encoder outputs for one image. The encoder is frozen, so these can be computed once
// per image and reused across epochs.
template <typename T>
struct EncodedSample {
  std::vector<BasicFeatureMap<T>> taps;
  std::vector<T> pooled;          // global mean of the final tap
  std::vector<Tensor<T>> skips;   // per decoder stage, empty where unused
};

// All trainable parts of the network: fusion, decoder, residual module and policy.
template <typename T>
class SegmentationModel {
 public:
  explicit SegmentationModel(const ModelConfig& config)
      : config_(config),
        fuse_(static_cast<int>(config.encoder.resolved_taps().size()), config.encoder.embed_dim, config.fused_dim),
        decoder_(config.decoder_config()),
        residual_(config.num_classes),
        policy_(config.encoder.embed_dim, config.actions) {}

  const ModelConfig& config() const noexcept { return config_; }
  FeatureFusion<T>& fuse() noexcept { return fuse_; }
  Decoder<T>& decoder() noexcept { return decoder_; }
  ResidualModule<T>& residual() noexcept { return residual_; }
  PolicyNetwork<T>& policy() noexcept { return policy_; }
  const FeatureFusion<T>& fuse() const noexcept { return fuse_; }
  const Decoder<T>& decoder() const noexcept { return decoder_; }
  const ResidualModule<T>& residual() const noexcept { return residual_; }
  const PolicyNetwork<T>& policy() const noexcept { return policy_; }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1417ull));
    fuse_.init(rng);
    decoder_.init(rng);
    residual_.init(rng);
    policy_.init(rng);
  }

  nn::ParameterRefs<T> parameters() {
    nn::ParameterRefs<T> all = fuse_.parameters();
    for (auto* p : decoder_.parameters()) all.push_back(p);
    for (auto* p : residual_.parameters()) all.push_back(p);
    for (auto* p : policy_.parameters()) all.push_back(p);
    return all;
  }

  EncodedSample<T> prepare(std::vector<BasicFeatureMap<T>> taps, const Tensor<T>& image) const {
    EncodedSample<T> s;
    s.pooled = global_pool(taps.back());
    s.skips = decoder_.prepare_skips(taps, image);
    s.taps = std::move(taps);
    return s;
  }

  // Inference: decoder logits, optionally refined with the greedy action.
  LogitMap<T> predict_logits(const EncodedSample<T>& s, bool use_refinement, PolicyOutput* action = nullptr) const {
    const auto fused = fuse_.forward(s.taps);
    LogitMap<T> z = decoder_.forward(fused, s.skips);
    if (!use_refinement) return z;
    const PolicyOutput pol = policy_.forward(s.pooled, PolicyMode::kGreedy, nullptr);
    if (action) *action = pol;
    if (pol.alpha == 0.0) return z;
    return refine(z, pol.alpha, residual_.forward(z));
  }

  std::vector<NamedArray> export_arrays() {
    std::vector<NamedArray> out;
    for (auto* p : parameters()) {
      NamedArray a{p->name, p->shape, {}};
      a.data.assign(p->value.begin(), p->value.end());
      out.push_back(std::move(a));
    }
    return out;
  }

  void import_arrays(std::span<const NamedArray> arrays) {
    for (auto* p : parameters()) {
      auto it = std::find_if(arrays.begin(), arrays.end(), [&](const NamedArray& a) { return a.name == p->name; });
      if (it == arrays.end()) throw ShapeError("missing weight array " + p->name);
      if (it->shape != p->shape) throw ShapeError("shape mismatch for weight array " + p->name);
      std::transform(it->data.begin(), it->data.end(), p->value.begin(), [](float v) { return static_cast<T>(v); });
    }
  }

 private:
  ModelConfig config_;
  FeatureFusion<T> fuse_;
  Decoder<T> decoder_;
  ResidualModule<T> residual_;
  PolicyNetwork<T> policy_;
};

}  // namespace cliprl
