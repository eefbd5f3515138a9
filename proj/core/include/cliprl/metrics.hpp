#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cliprl/tensor.hpp"

namespace cliprl {

// Per-class pixel tallies accumulated over any number of samples. Merging is
// associative and commutative, so evaluation can be split and reduced.
struct ConfusionCounts {
  int num_classes = 0;
  std::vector<std::uint64_t> tp;
  std::vector<std::uint64_t> fp;
  std::vector<std::uint64_t> fn;
  std::uint64_t pixels = 0;

  ConfusionCounts() = default;
  explicit ConfusionCounts(int k) : num_classes(k), tp(k, 0), fp(k, 0), fn(k, 0) {}

  void add(const Mask& pred, const Mask& gt);
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts accumulate(ConfusionCounts counts, const Mask& pred, const Mask& gt);
ConfusionCounts merge(const ConfusionCounts& a, const ConfusionCounts& b);

// tp / (tp + fp + fn); nullopt for classes absent from both prediction and ground truth.
std::vector<std::optional<double>> iou_per_class(const ConfusionCounts& counts);
// 2 tp / (2 tp + fp + fn); nullopt for absent classes.
std::vector<std::optional<double>> dice_per_class(const ConfusionCounts& counts);

// Unweighted mean over present classes; 0 when no class is present.
double mean_iou(const std::vector<std::optional<double>>& per_class);
double dice_coefficient(const ConfusionCounts& counts);

struct MetricsReport {
  std::vector<std::optional<double>> per_class_iou;
  std::vector<std::optional<double>> per_class_dice;
  double mean_iou = 0.0;
  double dice = 0.0;
  int num_samples = 0;
};

// Dataset-level report from accumulated counts.
MetricsReport make_report(const ConfusionCounts& counts, int num_samples);

// Per-image alternative: metrics averaged over images instead of pooled counts.
MetricsReport per_image_report(const std::vector<Mask>& preds, const std::vector<Mask>& gts, int num_classes);

// Machine-readable export: {"mean_iou", "dice", "num_samples", "per_class": [...]}.
std::string report_to_json(const MetricsReport& report);

// Aligned plain-text table with one row per class plus overall mIoU / Dice.
std::string report_table(const MetricsReport& report);

}  // namespace cliprl
