#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cliprl/decoder.hpp"
#include "cliprl/errors.hpp"
#include "cliprl/nn/layers.hpp"
#include "cliprl/random.hpp"
#include "cliprl/tensor.hpp"

namespace cliprl {

// Discrete residual scaling factors the policy chooses from.
struct ActionSpace {
  std::vector<double> alphas{-0.1, 0.0, 0.1};

  std::size_t size() const noexcept { return alphas.size(); }

  void validate() const {
    if (alphas.empty()) throw ConfigError("action space must be nonempty");
    if (std::find(alphas.begin(), alphas.end(), 0.0) == alphas.end()) {
      throw ConfigError("action space must contain the no-op action 0.0");
    }
    for (std::size_t i = 1; i < alphas.size(); ++i)
      if (!(alphas[i] > alphas[i - 1])) throw ConfigError("action space must be strictly increasing");
  }
};

enum class PolicyMode { kSample, kGreedy };

struct PolicyOutput {
  std::vector<double> action_probs;
  int sampled_index = 0;
  double log_prob = 0.0;
  double alpha = 0.0;
};

// Two-layer fully connected policy over the pooled encoder vector.
template <typename T>
class PolicyNetwork {
 public:
  struct Trace {
    std::vector<T> input;
    std::vector<T> hidden;  // post-ReLU
    std::vector<T> probs;
  };

  static constexpr int kHidden = 64;

  PolicyNetwork() = default;
  PolicyNetwork(int input_dim, ActionSpace actions)
      : actions_(std::move(actions)),
        fc1_("policy.fc1", input_dim, kHidden),
        fc2_("policy.fc2", kHidden, static_cast<int>(actions_.size())) {
    actions_.validate();
  }

  const ActionSpace& actions() const noexcept { return actions_; }
  nn::Linear<T>& fc1() noexcept { return fc1_; }
  nn::Linear<T>& fc2() noexcept { return fc2_; }
  const nn::Linear<T>& fc2() const noexcept { return fc2_; }

  nn::ParameterRefs<T> parameters() {
    return {&fc1_.weight(), &fc1_.bias(), &fc2_.weight(), &fc2_.bias()};
  }

  void init(Rng& rng) {
    fc1_.init(nn::Init::kHeUniform, rng);
    fc2_.init(nn::Init::kZeros, rng);
  }

  std::vector<T> action_probabilities(std::span<const T> pooled, Trace* trace = nullptr) const {
    std::vector<T> hidden = fc1_.forward(pooled);
    nn::relu_inplace<T>(hidden);
    std::vector<T> logits = fc2_.forward(hidden);
    const T m = *std::max_element(logits.begin(), logits.end());
    T sum = 0;
    for (auto& v : logits) {
      v = std::exp(v - m);
      sum += v;
    }
    for (auto& v : logits) v /= sum;
    if (trace) {
      trace->input.assign(pooled.begin(), pooled.end());
      trace->hidden = hidden;
      trace->probs = logits;
    }
    return logits;
  }

  // Sample mode draws from the distribution with the supplied generator; greedy mode
  // takes the argmax (lowest index on ties).
  PolicyOutput forward(std::span<const T> pooled, PolicyMode mode, Rng* rng, Trace* trace = nullptr) const {
    const std::vector<T> probs = action_probabilities(pooled, trace);
    PolicyOutput out;
    out.action_probs.assign(probs.begin(), probs.end());
    int index = 0;
    if (mode == PolicyMode::kGreedy) {
      for (int i = 1; i < static_cast<int>(probs.size()); ++i)
        if (probs[i] > probs[index]) index = i;
    } else {
      if (rng == nullptr) throw ArgumentError("policy_forward: sample mode requires an RNG");
      const double u = rng->uniform();
      double acc = 0.0;
      index = static_cast<int>(probs.size()) - 1;
      for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
        acc += static_cast<double>(probs[i]);
        if (u < acc) {
          index = i;
          break;
        }
      }
    }
    out.sampled_index = index;
    out.log_prob = std::log(std::max(static_cast<double>(probs[index]), 1e-300));
    out.alpha = actions_.alphas[index];
    return out;
  }

  // Backpropagates d(loss)/d(action logits) through both layers.
  void backward(std::span<const T> grad_logits, const Trace& trace) {
    std::vector<T> gh = fc2_.backward(grad_logits, trace.hidden);
    nn::relu_backward_inplace<T>(gh, trace.hidden);
    fc1_.backward(gh, trace.input);
  }

 private:
  ActionSpace actions_;
  nn::Linear<T> fc1_;
  nn::Linear<T> fc2_;
};

// Gradient of -log pi[chosen] * advantage w.r.t. the action logits.
template <typename T>
std::vector<T> policy_loss_grad_logits(std::span<const T> probs, int chosen, double advantage) {
  std::vector<T> g(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const double onehot = static_cast<int>(j) == chosen ? 1.0 : 0.0;
    g[j] = static_cast<T>(-advantage * (onehot - static_cast<double>(probs[j])));
  }
  return g;
}

// Residual correction r computed from the decoder logits: 3x3 conv K->32, ReLU, 3x3 conv 32->K.
// The last convolution starts at zero so refinement begins as a no-op.
template <typename T>
class ResidualModule {
 public:
  struct Trace {
    nn::ConvTrace<T> conv1;
    nn::ConvTrace<T> conv2;
    Tensor<T> hidden;
  };

  static constexpr int kHidden = 32;

  ResidualModule() = default;
  explicit ResidualModule(int num_classes)
      : k_(num_classes),
        conv1_("residual.conv1", num_classes, kHidden, 3),
        conv2_("residual.conv2", kHidden, num_classes, 3) {}

  nn::Conv2d<T>& conv1() noexcept { return conv1_; }
  nn::Conv2d<T>& conv2() noexcept { return conv2_; }
  nn::ParameterRefs<T> parameters() {
    return {&conv1_.weight(), &conv1_.bias(), &conv2_.weight(), &conv2_.bias()};
  }

  void init(Rng& rng) {
    conv1_.init(nn::Init::kHeUniform, rng);
    conv2_.init(nn::Init::kZeros, rng);
  }

  LogitMap<T> forward(const LogitMap<T>& z, Trace* trace = nullptr) const {
    if (z.channels() != k_) {
      throw ShapeError("residual: expected " + std::to_string(k_) + " channels, got " + z.shape_string());
    }
    if (!z.all_finite()) throw NumericError("residual: non-finite logits");
    Tensor<T> h = conv1_.forward(z, trace ? &trace->conv1 : nullptr);
    nn::relu_inplace(h.values());
    LogitMap<T> r = conv2_.forward(h, trace ? &trace->conv2 : nullptr);
    if (trace) trace->hidden = std::move(h);
    return r;
  }

  // Returns d(loss)/dz contributed through r.
  Tensor<T> backward(const Tensor<T>& grad_r, const Trace& trace) {
    Tensor<T> g = conv2_.backward(grad_r, trace.conv2, true);
    nn::relu_backward_inplace(g.values(), trace.hidden.values());
    return conv1_.backward(g, trace.conv1, true);
  }

 private:
  int k_ = 0;
  nn::Conv2d<T> conv1_;
  nn::Conv2d<T> conv2_;
};

// O = z + alpha * r. alpha == 0 returns z unchanged.
template <typename T>
LogitMap<T> refine(const LogitMap<T>& z, double alpha, const LogitMap<T>& r) {
  require_same_shape(z, r, "refine");
  if (alpha == 0.0) return z;
  LogitMap<T> out = z;
  const T a = static_cast<T>(alpha);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += a * r.data()[i];
  return out;
}

// Mean hard Dice over classes that occur in the prediction or the ground truth.
double mean_present_dice(const Mask& pred, const Mask& gt, int num_classes);

// Dice improvement of argmax(refined) over argmax(unrefined). Takes any per-class
// score maps (logits or probabilities); only their argmax matters.
template <typename T>
double compute_reward(const Tensor<T>& refined, const Tensor<T>& unrefined, const Mask& gt) {
  require_same_shape(refined, unrefined, "compute_reward");
  if (refined.height() != gt.height || refined.width() != gt.width) {
    throw ShapeError("compute_reward: mask size mismatch");
  }
  const int k = refined.channels();
  return mean_present_dice(argmax_classes(refined), gt, k) - mean_present_dice(argmax_classes(unrefined), gt, k);
}

// Running reward baseline (exponential moving average); plain state, never a parameter.
struct BaselineState {
  double value = 0.0;
  double momentum = 0.9;
  bool initialized = false;
};

inline BaselineState update_baseline(BaselineState state, double reward) {
  if (!std::isfinite(reward)) throw NumericError("update_baseline: non-finite reward");
  if (!state.initialized) {
    state.value = reward;
    state.initialized = true;
  } else {
    state.value = state.momentum * state.value + (1.0 - state.momentum) * reward;
  }
  return state;
}

// REINFORCE loss -log_prob * (R - b); the advantage is a constant w.r.t. parameters.
inline double policy_loss(double log_prob, double reward, double baseline) {
  return -log_prob * (reward - baseline);
}

}  // namespace cliprl
