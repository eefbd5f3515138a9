#include "cliprl/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "cliprl/errors.hpp"
#include "cliprl/random.hpp"

namespace cliprl {
namespace {

constexpr int kBackground = 0;
constexpr int kOrgan = 1;
constexpr int kInstrument = 2;
constexpr int kThread = 3;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

using Rgb = std::array<double, 3>;

// Base colour of each class family; extra classes get golden-ratio hues.
Rgb base_color(int class_id) {
  switch (class_id) {
    case kBackground: return {0.70, 0.30, 0.28};
    case kOrgan: return {0.90, 0.70, 0.42};
    case kInstrument: return {0.58, 0.62, 0.68};
    case kThread: return {0.12, 0.24, 0.66};
    default: break;
  }
  const double h = std::fmod(class_id * 0.6180339887498949, 1.0) * 6.0;
  const double s = 0.65, v = 0.85;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

struct Point {
  double x;
  double y;
};

// Even-odd rule; vertices in order.
bool inside_polygon(std::span<const Point> poly, double px, double py) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > py) != (b.y > py) && px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

class SceneCanvas {
 public:
  SceneCanvas(int size, Rng& rng) : size_(size), rng_(rng), labels_(size, size, kBackground) {}

  Mask& labels() { return labels_; }

  void paint_ellipse(int class_id, double min_axis, double max_axis) {
    const double cx = rng_.uniform(0.2, 0.8) * size_;
    const double cy = rng_.uniform(0.2, 0.8) * size_;
    const double ax = rng_.uniform(min_axis, max_axis) * size_;
    const double ay = rng_.uniform(min_axis, max_axis) * size_;
    const double th = rng_.uniform(0.0, std::numbers::pi);
    const double c = std::cos(th), s = std::sin(th);
    for (int y = 0; y < size_; ++y)
      for (int x = 0; x < size_; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double u = (c * dx + s * dy) / ax, v = (-s * dx + c * dy) / ay;
        if (u * u + v * v <= 1.0) labels_.at(y, x) = class_id;
      }
  }

  // A straight shaft entering from the image border, ending in a triangular jaw.
  void paint_instrument(int class_id) {
    const int side = rng_.uniform_int(0, 3);
    const double t = rng_.uniform(0.15, 0.85) * size_;
    Point start{};
    double angle = 0.0;
    switch (side) {
      case 0: start = {t, -1.0}; angle = std::numbers::pi / 2; break;
      case 1: start = {size_ + 1.0, t}; angle = std::numbers::pi; break;
      case 2: start = {t, size_ + 1.0}; angle = -std::numbers::pi / 2; break;
      default: start = {-1.0, t}; angle = 0.0; break;
    }
    angle += rng_.uniform(-0.5, 0.5);
    const double length = rng_.uniform(0.4, 0.7) * size_;
    const double half = rng_.uniform(0.04, 0.07) * size_;
    const Point dir{std::cos(angle), std::sin(angle)};
    const Point nrm{-dir.y, dir.x};
    const Point end{start.x + dir.x * length, start.y + dir.y * length};
    const std::array<Point, 4> shaft{{{start.x + nrm.x * half, start.y + nrm.y * half},
                                      {end.x + nrm.x * half, end.y + nrm.y * half},
                                      {end.x - nrm.x * half, end.y - nrm.y * half},
                                      {start.x - nrm.x * half, start.y - nrm.y * half}}};
    const double jaw = rng_.uniform(1.6, 2.4) * half;
    const std::array<Point, 3> tip{{{end.x + nrm.x * half * 1.6, end.y + nrm.y * half * 1.6},
                                    {end.x + dir.x * jaw, end.y + dir.y * jaw},
                                    {end.x - nrm.x * half * 1.6, end.y - nrm.y * half * 1.6}}};
    for (int y = 0; y < size_; ++y)
      for (int x = 0; x < size_; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        if (inside_polygon(shaft, px, py) || inside_polygon(tip, px, py)) labels_.at(y, x) = class_id;
      }
  }

  // Quadratic Bezier curve stamped with a square brush of the given width.
  void paint_thread(int class_id, int width) {
    const Point p0{rng_.uniform(0.05, 0.95) * size_, rng_.uniform(0.05, 0.95) * size_};
    const Point p2{rng_.uniform(0.05, 0.95) * size_, rng_.uniform(0.05, 0.95) * size_};
    const Point p1{rng_.uniform(0.0, 1.0) * size_, rng_.uniform(0.0, 1.0) * size_};
    const int steps = 8 * size_;
    const int lo = -(width - 1) / 2;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, c = t * t;
      const int cx = static_cast<int>(std::floor(a * p0.x + b * p1.x + c * p2.x));
      const int cy = static_cast<int>(std::floor(a * p0.y + b * p1.y + c * p2.y));
      for (int dy = lo; dy < lo + width; ++dy)
        for (int dx = lo; dx < lo + width; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x >= 0 && x < size_ && y >= 0 && y < size_) labels_.at(y, x) = class_id;
        }
    }
  }

 private:
  int size_;
  Rng& rng_;
  Mask labels_;
};

}  // namespace

void DatasetConfig::validate() const {
  if (height != width) {
    throw ConfigError("dataset: height (" + std::to_string(height) + ") must equal width (" +
                      std::to_string(width) + ")");
  }
  if (!is_power_of_two(height)) {
    throw ConfigError("dataset: image side " + std::to_string(height) + " is not a power of two");
  }
  if (num_classes < 2) throw ConfigError("dataset: num_classes must be >= 2");
  if (num_classes > 256) throw ConfigError("dataset: num_classes must be <= 256");
  if (num_samples < 0) throw ConfigError("dataset: num_samples must be >= 0");
  if (thin_structure_width < 1) throw ConfigError("dataset: thin_structure_width must be >= 1");
}

std::string class_name(int class_id) {
  switch (class_id) {
    case kBackground: return "background";
    case kOrgan: return "organ";
    case kInstrument: return "instrument";
    case kThread: return "thread";
    default: return "class" + std::to_string(class_id);
  }
}

SceneSample generate_scene(const DatasetConfig& config, int index) {
  config.validate();
  if (index < 0 || index >= config.num_samples) {
    throw ArgumentError("generate_scene: index " + std::to_string(index) + " out of range [0, " +
                        std::to_string(config.num_samples) + ")");
  }
  const int size = config.height;
  const int k = config.num_classes;
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(index)));

  SceneCanvas canvas(size, rng);
  const int organs = rng.uniform_int(1, 2);
  for (int i = 0; i < organs; ++i) canvas.paint_ellipse(kOrgan, 0.12, 0.28);
  for (int c = kThread + 1; c < k; ++c) canvas.paint_ellipse(c, 0.06, 0.12);
  if (k > kInstrument) {
    const int tools = rng.uniform_int(1, 2);
    for (int i = 0; i < tools; ++i) canvas.paint_instrument(kInstrument);
  }
  if (k > kThread) canvas.paint_thread(kThread, config.thin_structure_width);

  Mask mask = std::move(canvas.labels());
  if (std::none_of(mask.labels.begin(), mask.labels.end(), [](ClassId c) { return c == kBackground; }))
    mask.at(0, 0) = kBackground;

  // Per-sample colour jitter per class and a low-frequency texture shared by the frame.
  std::vector<Rgb> palette(k);
  for (int c = 0; c < k; ++c) {
    palette[c] = base_color(c);
    for (auto& ch : palette[c]) ch = std::clamp(ch + rng.uniform(-0.05, 0.05), 0.0, 1.0);
  }
  const double fx = rng.uniform(0.15, 0.45), fy = rng.uniform(0.15, 0.45);
  const double px = rng.uniform(0.0, 6.28), py = rng.uniform(0.0, 6.28);
  const double amplitude = 0.08;
  const double noise = 0.05;

  Image image(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int c = mask.at(y, x);
      const double texture = amplitude * std::sin(fx * x + px) * std::sin(fy * y + py);
      const double sheen = c == kInstrument ? 0.06 * std::sin(0.5 * (x + y)) : 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = palette[c][ch] + texture + sheen + rng.normal(0.0, noise);
        image.at(y, x, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }

  char id[64];
  std::snprintf(id, sizeof(id), "scene_%llu_%05d", static_cast<unsigned long long>(config.seed), index);
  return {id, std::move(image), std::move(mask)};
}

std::vector<SceneSample> generate_dataset(const DatasetConfig& config) {
  config.validate();
  std::vector<SceneSample> out;
  out.reserve(config.num_samples);
  for (int i = 0; i < config.num_samples; ++i) out.push_back(generate_scene(config, i));
  return out;
}

DatasetSplit split_dataset(std::span<const SceneSample> samples, double val_fraction,
                           std::uint64_t seed) {
  if (samples.empty()) throw ArgumentError("split_dataset: empty sample list");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ArgumentError("split_dataset: val_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5EED5EEDull));
  rng.shuffle(order.begin(), order.end());
  const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(samples.size())));
  DatasetSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? split.val : split.train).push_back(samples[order[i]]);
  }
  return split;
}

std::vector<std::size_t> class_histogram(const Mask& mask, int num_classes) {
  std::vector<std::size_t> hist(num_classes, 0);
  for (ClassId c : mask.labels) {
    if (c < 0 || c >= num_classes) {
      throw ArgumentError("class_histogram: class id " + std::to_string(c) + " out of range");
    }
    ++hist[c];
  }
  return hist;
}

}  // namespace cliprl
