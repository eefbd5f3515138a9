#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "cliprl/errors.hpp"
#include "cliprl/nn/parameter.hpp"
#include "cliprl/tensor.hpp"

namespace cliprl::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// Activations saved by a layer's forward pass for its backward pass.
template <typename T>
struct ConvTrace {
  std::vector<T> columns;  // im2col matrix, or the raw input for 1x1 kernels
  int height = 0;
  int width = 0;
};

// Stride-1 convolution with "same" zero padding and an odd square kernel.
// Weight layout: [out, in, k, k].
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel)
      : in_(in_channels), out_(out_channels), k_(kernel),
        weight_(name + ".weight", {out_channels, in_channels, kernel, kernel}),
        bias_(name + ".bias", {out_channels}) {
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("Conv2d kernel must be odd: " + name);
  }

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  int kernel() const noexcept { return k_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }
  const Parameter<T>& weight() const noexcept { return weight_; }
  const Parameter<T>& bias() const noexcept { return bias_; }
  ParameterRefs<T> parameters() { return {&weight_, &bias_}; }

  void init(Init kind, Rng& rng) {
    initialize(weight_, kind, static_cast<std::size_t>(in_) * k_ * k_, rng);
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, ConvTrace<T>* trace = nullptr) const {
    if (x.channels() != in_) {
      throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                       std::to_string(x.channels()));
    }
    const int h = x.height(), w = x.width();
    const int hw = h * w;
    const int rows = in_ * k_ * k_;
    std::vector<T> local;
    std::vector<T>& cols = trace ? trace->columns : local;
    if (k_ == 1) {
      cols.assign(x.data(), x.data() + x.size());
    } else {
      im2col(x, cols);
    }
    if (trace) {
      trace->height = h;
      trace->width = w;
    }
    Tensor<T> y(out_, h, w);
    ConstMatrixMap<T> wm(weight_.value.data(), out_, rows);
    ConstMatrixMap<T> cm(cols.data(), rows, hw);
    MatrixMap<T> ym(y.data(), out_, hw);
    ym.noalias() = wm * cm;
    ym.colwise() += ConstVectorMap<T>(bias_.value.data(), out_);
    return y;
  }

  // Accumulates parameter gradients; returns d(loss)/d(input) when requested.
  Tensor<T> backward(const Tensor<T>& grad_out, const ConvTrace<T>& trace, bool need_input_grad) {
    const int h = trace.height, w = trace.width;
    const int hw = h * w;
    const int rows = in_ * k_ * k_;
    if (grad_out.channels() != out_ || grad_out.height() != h || grad_out.width() != w) {
      throw ShapeError(weight_.name + ": gradient shape mismatch " + grad_out.shape_string());
    }
    ConstMatrixMap<T> gm(grad_out.data(), out_, hw);
    ConstMatrixMap<T> cm(trace.columns.data(), rows, hw);
    MatrixMap<T> dw(weight_.grad.data(), out_, rows);
    dw.noalias() += gm * cm.transpose();
    // Plain loops: Eigen's vectorized reductions peel by address alignment, which makes
    // the summation order (and the last bits) depend on where the buffer was allocated.
    for (int o = 0; o < out_; ++o) {
      const T* row = grad_out.data() + static_cast<std::size_t>(o) * hw;
      T acc = 0;
      for (int i = 0; i < hw; ++i) acc += row[i];
      bias_.grad[o] += acc;
    }
    if (!need_input_grad) return {};
    ConstMatrixMap<T> wm(weight_.value.data(), out_, rows);
    if (k_ == 1) {
      Tensor<T> gx(in_, h, w);
      MatrixMap<T>(gx.data(), in_, hw).noalias() = wm.transpose() * gm;
      return gx;
    }
    std::vector<T> dcols(static_cast<std::size_t>(rows) * hw);
    MatrixMap<T>(dcols.data(), rows, hw).noalias() = wm.transpose() * gm;
    return col2im(dcols, h, w);
  }

 private:
  void im2col(const Tensor<T>& x, std::vector<T>& cols) const {
    const int h = x.height(), w = x.width(), pad = k_ / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    cols.assign(static_cast<std::size_t>(in_) * k_ * k_ * hw, T(0));
    for (int c = 0; c < in_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T* row = cols.data() + ((static_cast<std::size_t>(c) * k_ + ky) * k_ + kx) * hw;
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            const T* src = &x(c, sy, 0);
            T* dst = row + static_cast<std::size_t>(y) * w;
            for (int xx = x0; xx < x1; ++xx) dst[xx] = src[xx + dx];
          }
        }
      }
    }
  }

  Tensor<T> col2im(const std::vector<T>& cols, int h, int w) const {
    const int pad = k_ / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    Tensor<T> gx(in_, h, w);
    for (int c = 0; c < in_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = cols.data() + ((static_cast<std::size_t>(c) * k_ + ky) * k_ + kx) * hw;
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            T* dst = &gx(c, sy, 0);
            const T* src = row + static_cast<std::size_t>(y) * w;
            for (int xx = x0; xx < x1; ++xx) dst[xx + dx] += src[xx];
          }
        }
      }
    }
    return gx;
  }

  int in_ = 0;
  int out_ = 0;
  int k_ = 1;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

// Transposed convolution with kernel 2 and stride 2: every input cell expands into
// an exact 2x2 output block, so output size is always twice the input size.
// Weight layout: [out, 2, 2, in].
template <typename T>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(std::string name, int in_channels, int out_channels)
      : in_(in_channels), out_(out_channels),
        weight_(name + ".weight", {out_channels, 2, 2, in_channels}),
        bias_(name + ".bias", {out_channels}) {}

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }
  const Parameter<T>& weight() const noexcept { return weight_; }
  ParameterRefs<T> parameters() { return {&weight_, &bias_}; }

  void init(Init kind, Rng& rng) {
    initialize(weight_, kind, static_cast<std::size_t>(in_), rng);
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, ConvTrace<T>* trace = nullptr) const {
    if (x.channels() != in_) {
      throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                       std::to_string(x.channels()));
    }
    const int h = x.height(), w = x.width();
    const int hw = h * w;
    RowMatrix<T> blocks(out_ * 4, hw);
    blocks.noalias() = ConstMatrixMap<T>(weight_.value.data(), out_ * 4, in_) *
                       ConstMatrixMap<T>(x.data(), in_, hw);
    Tensor<T> y(out_, 2 * h, 2 * w);
    for (int co = 0; co < out_; ++co) {
      const T b = bias_.value[co];
      for (int a = 0; a < 2; ++a)
        for (int bb = 0; bb < 2; ++bb) {
          const T* src = blocks.data() + static_cast<std::size_t>(co * 4 + a * 2 + bb) * hw;
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) y(co, 2 * yy + a, 2 * xx + bb) = src[yy * w + xx] + b;
        }
    }
    if (trace) {
      trace->columns.assign(x.data(), x.data() + x.size());
      trace->height = h;
      trace->width = w;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, const ConvTrace<T>& trace, bool need_input_grad) {
    const int h = trace.height, w = trace.width;
    const int hw = h * w;
    if (grad_out.channels() != out_ || grad_out.height() != 2 * h || grad_out.width() != 2 * w) {
      throw ShapeError(weight_.name + ": gradient shape mismatch " + grad_out.shape_string());
    }
    RowMatrix<T> gblocks(out_ * 4, hw);
    for (int co = 0; co < out_; ++co) {
      T bsum = 0;
      for (int a = 0; a < 2; ++a)
        for (int bb = 0; bb < 2; ++bb) {
          T* dst = gblocks.data() + static_cast<std::size_t>(co * 4 + a * 2 + bb) * hw;
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
              const T g = grad_out(co, 2 * yy + a, 2 * xx + bb);
              dst[yy * w + xx] = g;
              bsum += g;
            }
        }
      bias_.grad[co] += bsum;
    }
    ConstMatrixMap<T> xm(trace.columns.data(), in_, hw);
    MatrixMap<T>(weight_.grad.data(), out_ * 4, in_).noalias() += gblocks * xm.transpose();
    if (!need_input_grad) return {};
    Tensor<T> gx(in_, h, w);
    MatrixMap<T>(gx.data(), in_, hw).noalias() =
        ConstMatrixMap<T>(weight_.value.data(), out_ * 4, in_).transpose() * gblocks;
    return gx;
  }

 private:
  int in_ = 0;
  int out_ = 0;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

// Fully connected layer on vectors. Weight layout: [out, in].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features)
      : in_(in_features), out_(out_features),
        weight_(name + ".weight", {out_features, in_features}),
        bias_(name + ".bias", {out_features}) {}

  int in_features() const noexcept { return in_; }
  int out_features() const noexcept { return out_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }
  const Parameter<T>& weight() const noexcept { return weight_; }
  const Parameter<T>& bias() const noexcept { return bias_; }
  ParameterRefs<T> parameters() { return {&weight_, &bias_}; }

  void init(Init kind, Rng& rng) {
    initialize(weight_, kind, static_cast<std::size_t>(in_), rng);
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
  }

  std::vector<T> forward(std::span<const T> x) const {
    if (static_cast<int>(x.size()) != in_) {
      throw ShapeError(weight_.name + ": expected input length " + std::to_string(in_) + ", got " +
                       std::to_string(x.size()));
    }
    std::vector<T> y(bias_.value.begin(), bias_.value.end());
    for (int o = 0; o < out_; ++o) {
      const T* row = weight_.value.data() + static_cast<std::size_t>(o) * in_;
      T acc = 0;
      for (int i = 0; i < in_; ++i) acc += row[i] * x[i];
      y[o] += acc;
    }
    return y;
  }

  std::vector<T> backward(std::span<const T> grad_out, std::span<const T> input) {
    ConstVectorMap<T> g(grad_out.data(), out_);
    MatrixMap<T>(weight_.grad.data(), out_, in_).noalias() +=
        g * ConstVectorMap<T>(input.data(), in_).transpose();
    VectorMap<T>(bias_.grad.data(), out_) += g;
    std::vector<T> gx(in_, T(0));
    for (int o = 0; o < out_; ++o) {
      const T* row = weight_.value.data() + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) gx[i] += row[i] * grad_out[o];
    }
    return gx;
  }

 private:
  int in_ = 0;
  int out_ = 0;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

template <typename T>
void relu_inplace(std::span<T> v) {
  for (auto& x : v) x = x > T(0) ? x : T(0);
}

// Masks grad by the ReLU output (zero where the activation was clipped).
template <typename T>
void relu_backward_inplace(std::span<T> grad, std::span<const T> activated) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activated[i] > T(0))) grad[i] = T(0);
}

// Bilinear resampling with half-pixel centres (edge-clamped).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& src, int out_h, int out_w) {
  if (src.height() == out_h && src.width() == out_w) return src;
  if (src.height() == 0 || src.width() == 0) throw ShapeError("resize_bilinear: empty source");
  Tensor<T> dst(src.channels(), out_h, out_w);
  const double sy = static_cast<double>(src.height()) / out_h;
  const double sx = static_cast<double>(src.width()) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels(); ++c) {
        const double top = (1 - wx) * src(c, y0, x0) + wx * src(c, y0, x1);
        const double bot = (1 - wx) * src(c, y1, x0) + wx * src(c, y1, x1);
        dst(c, y, x) = static_cast<T>((1 - wy) * top + wy * bot);
      }
    }
  }
  return dst;
}

}  // namespace cliprl::nn
