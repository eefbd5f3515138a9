#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cliprl/errors.hpp"

namespace cliprl {

// Dense channel-major (C x H x W) tensor used for feature maps and logits.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int channels, int height, int width, T fill = T(0))
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 0 || width < 0) throw ShapeError("negative tensor dimension");
  }

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int c, int y, int x) noexcept { return data_[(c * plane()) + y * width_ + x]; }
  const T& operator()(int c, int y, int x) const noexcept {
    return data_[(c * plane()) + y * width_ + x];
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() & noexcept { return data_; }
  std::span<const T> values() const& noexcept { return data_; }
  void values() && = delete;  // a span into a temporary would dangle
  std::span<T> channel(int c) noexcept { return {data_.data() + c * plane(), plane()}; }
  std::span<const T> channel(int c) const noexcept { return {data_.data() + c * plane(), plane()}; }

  bool same_shape(const Tensor& o) const noexcept {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << channels_ << "x" << height_ << "x" << width_;
    return os.str();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(channels_, height_, width_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

// Concatenate along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: spatial mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
  Tensor<T> out(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

using ClassId = std::int32_t;

// Per-pixel class ids, row-major H x W.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<ClassId> labels;

  Mask() = default;
  Mask(int h, int w, ClassId fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  ClassId& at(int y, int x) noexcept { return labels[static_cast<std::size_t>(y) * width + x]; }
  ClassId at(int y, int x) const noexcept { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const noexcept { return labels.size(); }

  friend bool operator==(const Mask&, const Mask&) = default;
};

// RGB image, row-major H x W x 3 interleaved, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) noexcept {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int y, int x, int c) const noexcept {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// HWC image -> 3 x H x W tensor.
template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> t(3, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) t(c, y, x) = static_cast<T>(img.at(y, x, c));
  return t;
}

}  // namespace cliprl
