#include "commands.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "cliprl/dataset.hpp"
#include "cliprl/errors.hpp"
#include "cliprl/image_io.hpp"
#include "cliprl/plot.hpp"
#include "json.hpp"

namespace cliprl::cli {
namespace fs = std::filesystem;

namespace {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

// CLIPRL_LOG=quiet|info|debug (default info).
LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("CLIPRL_LOG");
    if (v == nullptr) return LogLevel::kInfo;
    const std::string s(v);
    if (s == "quiet" || s == "0") return LogLevel::kQuiet;
    if (s == "debug" || s == "2") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) <= static_cast<int>(log_level())) std::cerr << msg << '\n';
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw IoError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw IoError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<SceneSample> dataset_for(const RunConfig& config, const std::optional<fs::path>& manifest) {
  if (manifest) return load_manifest_dataset(*manifest, config.dataset.height);
  return generate_dataset(config.dataset);
}

void write_plots(const TrainHistory& history, const fs::path& dir) {
  fs::create_directories(dir);
  PlotSeries seg{"L_seg", {}, {}}, rl{"L_RL", {}, {}}, total{"L_total", {}, {}};
  PlotSeries miou{"val mIoU", {}, {}}, dice{"val Dice", {}, {}}, f{"f_epoch", {}, {}};
  for (const auto& e : history.epochs) {
    const double x = e.epoch;
    for (auto* s : {&seg, &rl, &total, &miou, &dice, &f}) s->x.push_back(x);
    seg.y.push_back(e.seg_loss);
    rl.y.push_back(e.rl_loss);
    total.y.push_back(e.total_loss);
    miou.y.push_back(e.val_miou);
    dice.y.push_back(e.val_dice);
    f.y.push_back(e.f_epoch);
  }
  write_line_plot(dir / "loss.svg", "Training losses", "epoch", {seg, rl, total});
  write_line_plot(dir / "miou.svg", "Validation metrics", "epoch", {miou, dice});
  write_line_plot(dir / "f_epoch.svg", "Curriculum factor", "epoch", {f});
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e)) return kDivergence;
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigFailure;
  if (dynamic_cast<const IoError*>(&e)) return kIoFailure;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kIoFailure;
  return kFailure;
}

RunConfig resolve_config(const std::optional<fs::path>& config_path, const Overrides& overrides) {
  RunConfig config = config_path ? load_config(*config_path) : RunConfig{};
  if (overrides.seed) config.train.seed = *overrides.seed;
  if (overrides.epochs) config.train.epochs = *overrides.epochs;
  if (overrides.mode) config.train.mode = parse_mode(*overrides.mode);
  if (overrides.out_dir) config.out_dir = *overrides.out_dir;
  config.dataset.validate();
  config.resolved_train().validate();
  return config;
}

std::array<unsigned char, 3> class_color(int class_id) {
  switch (class_id) {
    case 0: return {0, 0, 0};
    case 1: return {255, 200, 0};
    case 2: return {0, 160, 255};
    case 3: return {255, 0, 255};
    default: break;
  }
  const unsigned h = static_cast<unsigned>(class_id) * 2654435761u;
  return {static_cast<unsigned char>(64 + (h & 0xBF)), static_cast<unsigned char>(64 + ((h >> 8) & 0xBF)),
          static_cast<unsigned char>(64 + ((h >> 16) & 0xBF))};
}

GenerateSummary cmd_generate(const RunConfig& config, const fs::path& out_dir, bool force) {
  config.dataset.validate();
  prepare_out_dir(out_dir, force);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  GenerateSummary summary;
  summary.histogram.assign(config.dataset.num_classes, 0);
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < config.dataset.num_samples; ++i) {
    const SceneSample s = generate_scene(config.dataset, i);
    const fs::path img = out_dir / "images" / (s.id + ".png");
    const fs::path msk = out_dir / "masks" / (s.id + ".png");
    save_image(s.image, img);
    save_mask(s.mask, msk);
    entries.push_back({img, msk, s.id});
    const auto h = class_histogram(s.mask, config.dataset.num_classes);
    for (std::size_t c = 0; c < h.size(); ++c) summary.histogram[c] += h[c];
    ++summary.samples;
  }
  write_manifest(out_dir / "manifest.txt", entries);
  return summary;
}

std::vector<SceneSample> load_manifest_dataset(const fs::path& manifest, int side) {
  std::vector<SceneSample> out;
  for (const auto& e : read_manifest(manifest)) {
    SceneSample s;
    s.id = e.id;
    s.image = load_image(e.image_path);
    s.mask = load_mask(e.mask_path);
    if (s.image.height != s.mask.height || s.image.width != s.mask.width) {
      throw IoError("manifest entry " + e.id + ": image and mask sizes differ");
    }
    if (s.image.height != side || s.image.width != side) {
      throw ConfigError("manifest entry " + e.id + " is " + std::to_string(s.image.height) + "x" +
                        std::to_string(s.image.width) + ", config expects " + std::to_string(side));
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError("manifest " + manifest.string() + " lists no samples");
  return out;
}

TrainOutputs cmd_train(const RunConfig& config, const std::optional<fs::path>& manifest, bool force) {
  prepare_out_dir(config.out_dir, force);
  const auto samples = dataset_for(config, manifest);
  TrainConfig tc = config.resolved_train();
  TrainOutputs out;
  out.checkpoint = config.out_dir / "checkpoint.bin";
  out.history = config.out_dir / "history.tsv";
  tc.checkpoint_path = out.checkpoint;
  write_text(config.out_dir / "config.txt", to_text(config));
  log(LogLevel::kInfo, "training " + to_string(tc.mode) + " for " + std::to_string(tc.epochs) + " epochs on " +
                           std::to_string(samples.size()) + " samples");
  out.result = train(tc, samples, [](const EpochRecord& e) {
    char line[200];
    std::snprintf(line, sizeof(line), "epoch %3d  f=%.4f  L_seg=%.4f  L_RL=%+.5f  reward=%+.5f  val mIoU=%.4f  Dice=%.4f",
                  e.epoch, e.f_epoch, e.seg_loss, e.rl_loss, e.mean_reward, e.val_miou, e.val_dice);
    log(LogLevel::kInfo, line);
  });
  save_history(out.result.history, out.history);
  write_plots(out.result.history, config.out_dir / "plots");
  log(LogLevel::kInfo, "best val mIoU " + std::to_string(out.result.best.best_val_miou) + " at epoch " +
                           std::to_string(out.result.best.epoch));
  return out;
}

MetricsReport cmd_eval(const fs::path& checkpoint, const std::vector<SceneSample>& samples, bool val_only,
                       const fs::path& out_dir) {
  const CheckpointBundle bundle = load_checkpoint(checkpoint);
  TrainConfig tc;
  const Pipeline pipeline = pipeline_from_checkpoint(bundle, &tc);
  for (const auto& s : samples) {
    if (s.image.height != tc.model.image_side || s.image.width != tc.model.image_side) {
      throw ConfigError("sample " + s.id + " does not match the checkpoint's image size " +
                        std::to_string(tc.model.image_side));
    }
  }
  const MetricsReport report =
      val_only ? validate(pipeline, split_dataset(samples, tc.val_fraction, tc.seed).val, tc.mode)
               : validate(pipeline, samples, tc.mode);
  fs::create_directories(out_dir);
  write_text(out_dir / "report.json", report_to_json(report) + "\n");
  write_text(out_dir / "report.txt", report_table(report));
  return report;
}

InferOutputs cmd_infer(const fs::path& checkpoint, const fs::path& image_path, const std::optional<fs::path>& gt_path,
                       const fs::path& out_dir) {
  const CheckpointBundle bundle = load_checkpoint(checkpoint);
  TrainConfig tc;
  const Pipeline pipeline = pipeline_from_checkpoint(bundle, &tc);
  const int side = tc.model.image_side;
  Image original = load_image(image_path);
  if (original.height != side || original.width != side) {
    log(LogLevel::kInfo, "warning: resizing " + image_path.string() + " from " + std::to_string(original.height) +
                             "x" + std::to_string(original.width) + " to model size " + std::to_string(side));
  }
  const Image input = resize_image(original, side, side);
  InferOutputs out;
  out.mask = pipeline.predict(pipeline.encode(input), tc.mode == AblationMode::kCurriculumRl);

  fs::create_directories(out_dir);
  const std::string stem = image_path.stem().string();
  out.mask_path = out_dir / (stem + "_mask.png");
  out.overlay_path = out_dir / (stem + "_overlay.png");
  save_mask(out.mask, out.mask_path);

  Image overlay = input;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const int c = out.mask.at(y, x);
      if (c == 0) continue;
      const auto col = class_color(c);
      for (int ch = 0; ch < 3; ++ch) overlay.at(y, x, ch) = 0.5f * overlay.at(y, x, ch) + 0.5f * col[ch] / 255.0f;
    }
  save_image(overlay, out.overlay_path);

  if (gt_path) {
    const Mask gt = load_mask(*gt_path);
    if (gt.height != side || gt.width != side) throw ConfigError("ground-truth mask size does not match the model");
    // Grey: correct; red: false positive; blue: false negative; yellow: wrong foreground class.
    Image errors(side, side);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        const int p = out.mask.at(y, x), g = gt.at(y, x);
        std::array<float, 3> col{};
        if (p == g) {
          const float v = 0.25f + 0.5f * (input.at(y, x, 0) + input.at(y, x, 1) + input.at(y, x, 2)) / 3.0f;
          col = {v, v, v};
        } else if (g == 0) {
          col = {1.0f, 0.0f, 0.0f};
          ++out.false_positive_pixels;
        } else if (p == 0) {
          col = {0.0f, 0.3f, 1.0f};
          ++out.false_negative_pixels;
        } else {
          col = {1.0f, 0.9f, 0.0f};
          ++out.confused_pixels;
        }
        for (int ch = 0; ch < 3; ++ch) errors.at(y, x, ch) = col[ch];
      }
    out.error_path = out_dir / (stem + "_errors.png");
    save_image(errors, *out.error_path);
  }
  return out;
}

AblationTable cmd_ablate(const RunConfig& config, int seeds, const std::optional<fs::path>& manifest, bool force) {
  prepare_out_dir(config.out_dir, force);
  fs::create_directories(config.out_dir / "runs");
  const auto samples = dataset_for(config, manifest);
  const TrainConfig tc = config.resolved_train();
  const AblationTable table = run_ablation(tc, samples, seeds, [&](AblationMode mode, std::uint64_t seed, const TrainResult& r) {
    save_history(r.history, config.out_dir / "runs" / (to_string(mode) + "_seed" + std::to_string(seed) + ".tsv"));
    log(LogLevel::kInfo, to_string(mode) + " seed " + std::to_string(seed) + ": best val mIoU " +
                             std::to_string(r.best.best_val_miou));
  });
  write_text(config.out_dir / "ablation.txt", format_ablation_table(table));
  nlohmann::json j;
  j["seeds"] = table.seeds;
  for (const auto& row : table.rows) {
    j["rows"].push_back({{"mode", to_string(row.mode)},
                         {"label", row.label},
                         {"miou", row.miou},
                         {"dice", row.dice},
                         {"miou_mean", row.miou_mean},
                         {"miou_std", row.miou_std},
                         {"dice_mean", row.dice_mean},
                         {"dice_std", row.dice_std}});
  }
  write_text(config.out_dir / "ablation.json", j.dump(2) + "\n");
  return table;
}

}  // namespace cliprl::cli
