#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cliprl/errors.hpp"
#include "cliprl/tensor.hpp"

namespace cliprl {

struct LossWeights {
  double w_ce = 1.0;
  double w_dice = 1.0;
  double dice_smooth = 1.0;

  void validate() const {
    if (w_ce < 0 || w_dice < 0 || dice_smooth < 0) throw ConfigError("loss weights must be >= 0");
    if (w_ce + w_dice <= 0) throw ConfigError("w_ce + w_dice must be > 0");
  }
};

inline constexpr double kProbabilityFloor = 1e-12;

namespace detail {
template <typename T>
void check_target(const Tensor<T>& probs, const Mask& gt, const char* what) {
  if (probs.height() != gt.height || probs.width() != gt.width) {
    throw ShapeError(std::string(what) + ": prediction " + probs.shape_string() + " vs mask " +
                     std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  for (ClassId c : gt.labels) {
    if (c < 0 || c >= probs.channels()) {
      throw ArgumentError(std::string(what) + ": ground-truth class " + std::to_string(c) +
                          " outside [0, " + std::to_string(probs.channels()) + ")");
    }
  }
}
}  // namespace detail

// Mean over pixels of -ln(p[gt]), with p clamped below at 1e-12.
template <typename T>
double cross_entropy(const Tensor<T>& probs, const Mask& gt) {
  detail::check_target(probs, gt, "cross_entropy");
  const std::size_t n = probs.plane();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = static_cast<double>(probs.data()[gt.labels[i] * n + i]);
    sum -= std::log(std::max(p, kProbabilityFloor));
  }
  return sum / static_cast<double>(n);
}

// Soft Dice per class c: (2 sum p_c g_c + eps) / (sum p_c + sum g_c + eps);
// loss is 1 - mean over all K classes.
template <typename T>
double dice_loss(const Tensor<T>& probs, const Mask& gt, double smooth = 1.0) {
  detail::check_target(probs, gt, "dice_loss");
  const int k = probs.channels();
  const std::size_t n = probs.plane();
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    double inter = 0.0, psum = 0.0, gsum = 0.0;
    const T* p = probs.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double pv = static_cast<double>(p[i]);
      psum += pv;
      if (gt.labels[i] == c) {
        inter += pv;
        gsum += 1.0;
      }
    }
    total += (2.0 * inter + smooth) / (psum + gsum + smooth);
  }
  return 1.0 - total / k;
}

template <typename T>
double seg_loss(const Tensor<T>& probs, const Mask& gt, const LossWeights& w) {
  double loss = 0.0;
  if (w.w_ce != 0.0) loss += w.w_ce * cross_entropy(probs, gt);
  if (w.w_dice != 0.0) loss += w.w_dice * dice_loss(probs, gt, w.dice_smooth);
  return loss;
}

// d(seg_loss)/d(probs).
template <typename T>
Tensor<T> seg_loss_grad_probs(const Tensor<T>& probs, const Mask& gt, const LossWeights& w) {
  detail::check_target(probs, gt, "seg_loss_grad_probs");
  const int k = probs.channels();
  const std::size_t n = probs.plane();
  Tensor<T> grad(k, probs.height(), probs.width());
  if (w.w_ce != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = gt.labels[i] * n + i;
      const double p = static_cast<double>(probs.data()[idx]);
      if (p > kProbabilityFloor) grad.data()[idx] += static_cast<T>(-w.w_ce / (static_cast<double>(n) * p));
    }
  }
  if (w.w_dice != 0.0) {
    const double eps = w.dice_smooth;
    for (int c = 0; c < k; ++c) {
      double inter = 0.0, psum = 0.0, gsum = 0.0;
      const T* p = probs.data() + c * n;
      for (std::size_t i = 0; i < n; ++i) {
        psum += static_cast<double>(p[i]);
        if (gt.labels[i] == c) {
          inter += static_cast<double>(p[i]);
          gsum += 1.0;
        }
      }
      const double denom = psum + gsum + eps;
      const double num = 2.0 * inter + eps;
      const double scale = -w.w_dice / (k * denom * denom);
      T* g = grad.data() + c * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = gt.labels[i] == c ? 1.0 : 0.0;
        g[i] += static_cast<T>(scale * (2.0 * gi * denom - num));
      }
    }
  }
  return grad;
}

// Pull a gradient w.r.t. softmax outputs back to the logits, pixel by pixel.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& grad_probs) {
  require_same_shape(probs, grad_probs, "softmax_backward");
  const int k = probs.channels();
  const std::size_t n = probs.plane();
  Tensor<T> out(k, probs.height(), probs.width());
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int c = 0; c < k; ++c)
      dot += static_cast<double>(probs.data()[c * n + i]) * static_cast<double>(grad_probs.data()[c * n + i]);
    for (int c = 0; c < k; ++c) {
      const double p = static_cast<double>(probs.data()[c * n + i]);
      out.data()[c * n + i] = static_cast<T>(p * (static_cast<double>(grad_probs.data()[c * n + i]) - dot));
    }
  }
  return out;
}

// f = (1 - current/total)^2, defined for 0 <= current <= total, total >= 1.
inline double curriculum_factor(int epoch_current, int epoch_total) {
  if (epoch_total < 1) throw ArgumentError("curriculum_factor: epoch_total must be >= 1");
  if (epoch_current < 0 || epoch_current > epoch_total) {
    throw ArgumentError("curriculum_factor: epoch_current " + std::to_string(epoch_current) +
                        " outside [0, " + std::to_string(epoch_total) + "]");
  }
  const double r = 1.0 - static_cast<double>(epoch_current) / static_cast<double>(epoch_total);
  return r * r;
}

struct CurriculumState {
  int epoch_current = 0;
  int epoch_total = 1;
  double f_epoch() const { return curriculum_factor(epoch_current, epoch_total); }
};

// Affine blend of segmentation and policy losses.
inline double total_loss(double seg, double rl, double f_epoch) {
  if (!(f_epoch >= 0.0 && f_epoch <= 1.0)) throw ArgumentError("total_loss: f_epoch outside [0, 1]");
  const double blend = f_epoch * seg + (1.0 - f_epoch) * rl;
  // Rounding can push the blend one ulp outside [min, max].
  return std::clamp(blend, std::min(seg, rl), std::max(seg, rl));
}

}  // namespace cliprl
