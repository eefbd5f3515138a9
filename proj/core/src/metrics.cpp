#include "cliprl/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "cliprl/dataset.hpp"
#include "cliprl/errors.hpp"
#include "cliprl/rl_refine.hpp"
#include "json.hpp"

namespace cliprl {

void ConfusionCounts::add(const Mask& pred, const Mask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ArgumentError("accumulate: prediction " + std::to_string(pred.height) + "x" +
                        std::to_string(pred.width) + " vs ground truth " + std::to_string(gt.height) +
                        "x" + std::to_string(gt.width));
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const ClassId p = pred.labels[i];
    const ClassId g = gt.labels[i];
    if (p < 0 || p >= num_classes || g < 0 || g >= num_classes) {
      throw ArgumentError("accumulate: class id outside [0, " + std::to_string(num_classes) + ")");
    }
    if (p == g) {
      ++tp[g];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  pixels += gt.size();
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  if (other.num_classes != num_classes) throw ArgumentError("merge: class count mismatch");
  for (int c = 0; c < num_classes; ++c) {
    tp[c] += other.tp[c];
    fp[c] += other.fp[c];
    fn[c] += other.fn[c];
  }
  pixels += other.pixels;
  return *this;
}

ConfusionCounts accumulate(ConfusionCounts counts, const Mask& pred, const Mask& gt) {
  counts.add(pred, gt);
  return counts;
}

ConfusionCounts merge(const ConfusionCounts& a, const ConfusionCounts& b) {
  ConfusionCounts out = a;
  out += b;
  return out;
}

std::vector<std::optional<double>> iou_per_class(const ConfusionCounts& counts) {
  std::vector<std::optional<double>> out(counts.num_classes);
  for (int c = 0; c < counts.num_classes; ++c) {
    const std::uint64_t denom = counts.tp[c] + counts.fp[c] + counts.fn[c];
    if (denom > 0) out[c] = static_cast<double>(counts.tp[c]) / static_cast<double>(denom);
  }
  return out;
}

std::vector<std::optional<double>> dice_per_class(const ConfusionCounts& counts) {
  std::vector<std::optional<double>> out(counts.num_classes);
  for (int c = 0; c < counts.num_classes; ++c) {
    const std::uint64_t denom = 2 * counts.tp[c] + counts.fp[c] + counts.fn[c];
    if (denom > 0) out[c] = static_cast<double>(2 * counts.tp[c]) / static_cast<double>(denom);
  }
  return out;
}

double mean_iou(const std::vector<std::optional<double>>& per_class) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : per_class)
    if (v) {
      sum += *v;
      ++n;
    }
  return n == 0 ? 0.0 : sum / n;
}

double dice_coefficient(const ConfusionCounts& counts) { return mean_iou(dice_per_class(counts)); }

MetricsReport make_report(const ConfusionCounts& counts, int num_samples) {
  MetricsReport r;
  r.per_class_iou = iou_per_class(counts);
  r.per_class_dice = dice_per_class(counts);
  r.mean_iou = mean_iou(r.per_class_iou);
  r.dice = mean_iou(r.per_class_dice);
  r.num_samples = num_samples;
  return r;
}

MetricsReport per_image_report(const std::vector<Mask>& preds, const std::vector<Mask>& gts, int num_classes) {
  if (preds.size() != gts.size()) throw ArgumentError("per_image_report: list sizes differ");
  MetricsReport r;
  r.per_class_iou.assign(num_classes, std::nullopt);
  r.per_class_dice.assign(num_classes, std::nullopt);
  std::vector<double> iou_sum(num_classes, 0.0), dice_sum(num_classes, 0.0);
  std::vector<int> seen(num_classes, 0);
  double miou = 0.0, mdice = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ConfusionCounts c(num_classes);
    c.add(preds[i], gts[i]);
    const auto iou = iou_per_class(c);
    const auto dice = dice_per_class(c);
    miou += mean_iou(iou);
    mdice += mean_iou(dice);
    for (int k = 0; k < num_classes; ++k)
      if (iou[k]) {
        iou_sum[k] += *iou[k];
        dice_sum[k] += *dice[k];
        ++seen[k];
      }
  }
  for (int k = 0; k < num_classes; ++k)
    if (seen[k] > 0) {
      r.per_class_iou[k] = iou_sum[k] / seen[k];
      r.per_class_dice[k] = dice_sum[k] / seen[k];
    }
  const double n = preds.empty() ? 1.0 : static_cast<double>(preds.size());
  r.mean_iou = miou / n;
  r.dice = mdice / n;
  r.num_samples = static_cast<int>(preds.size());
  return r;
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["mean_iou"] = report.mean_iou;
  j["dice"] = report.dice;
  j["num_samples"] = report.num_samples;
  j["per_class"] = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class_iou.size(); ++c) {
    nlohmann::json row;
    row["class_id"] = c;
    row["name"] = class_name(static_cast<int>(c));
    row["iou"] = report.per_class_iou[c] ? nlohmann::json(*report.per_class_iou[c]) : nlohmann::json();
    row["dice"] = report.per_class_dice[c] ? nlohmann::json(*report.per_class_dice[c]) : nlohmann::json();
    j["per_class"].push_back(row);
  }
  return j.dump(2);
}

std::string report_table(const MetricsReport& report) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof(line), "%-14s %10s %10s\n", "Class", "IoU", "Dice");
  os << line << std::string(36, '-') << '\n';
  for (std::size_t c = 0; c < report.per_class_iou.size(); ++c) {
    const auto& iou = report.per_class_iou[c];
    const auto& dice = report.per_class_dice[c];
    if (iou) {
      std::snprintf(line, sizeof(line), "%-14s %10.4f %10.4f\n", class_name(static_cast<int>(c)).c_str(), *iou,
                    dice.value_or(0.0));
    } else {
      std::snprintf(line, sizeof(line), "%-14s %10s %10s\n", class_name(static_cast<int>(c)).c_str(), "absent",
                    "absent");
    }
    os << line;
  }
  os << std::string(36, '-') << '\n';
  std::snprintf(line, sizeof(line), "%-14s %10.4f %10.4f\n", "mean", report.mean_iou, report.dice);
  os << line;
  return os.str();
}

double mean_present_dice(const Mask& pred, const Mask& gt, int num_classes) {
  ConfusionCounts c(num_classes);
  c.add(pred, gt);
  return dice_coefficient(c);
}

}  // namespace cliprl
