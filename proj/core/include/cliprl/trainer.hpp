#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cliprl/dataset.hpp"
#include "cliprl/losses.hpp"
#include "cliprl/metrics.hpp"
#include "cliprl/model.hpp"
#include "cliprl/rl_refine.hpp"
#include "cliprl/weight_file.hpp"

namespace cliprl {

enum class AblationMode { kBaseline, kCurriculum, kCurriculumRl };

std::string to_string(AblationMode mode);
AblationMode parse_mode(const std::string& text);
// Row label used in ablation tables.
std::string mode_label(AblationMode mode);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 1;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  AblationMode mode = AblationMode::kCurriculumRl;
  LossWeights loss_weights;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;  // global L2 norm; <= 0 disables
  double baseline_momentum = 0.9;
  ModelConfig model;
  std::optional<std::filesystem::path> checkpoint_path;  // written on each strict improvement

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double f_epoch = 1.0;
  double seg_loss = 0.0;
  double rl_loss = 0.0;
  double total_loss = 0.0;
  double mean_reward = 0.0;
  double baseline = 0.0;
  double val_miou = 0.0;
  double val_dice = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// Columnar plain text, one header line and one row per epoch.
std::string history_to_text(const TrainHistory& history);
void save_history(const TrainHistory& history, const std::filesystem::path& path);

struct CheckpointBundle {
  std::vector<NamedArray> weights;
  BaselineState baseline;
  int epoch = -1;
  double best_val_miou = -1.0;
  std::uint64_t config_fingerprint = 0;
  std::string config_text;  // serialized TrainConfig, so a checkpoint is self-describing
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: magic "CLRLCKPT", u32 version, u64 fingerprint, i32 epoch, f64 best mIoU,
// f64 baseline value, f64 momentum, u8 initialized, u32 + config text, u32 array count,
// arrays (u32 name length, name, u32 rank, i32 dims, float32 data), u64 FNV-1a checksum
// of every preceding byte.
void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path);
CheckpointBundle load_checkpoint(const std::filesystem::path& path);

// Replaces the stored checkpoint only when a candidate strictly beats the best mIoU so far.
class CheckpointKeeper {
 public:
  explicit CheckpointKeeper(std::optional<std::filesystem::path> path = std::nullopt) : path_(std::move(path)) {}

  // Returns true when the candidate became the new best.
  bool offer(double val_miou, const std::function<CheckpointBundle()>& make_bundle);

  const std::optional<CheckpointBundle>& best() const noexcept { return best_; }
  double best_miou() const noexcept { return best_ ? best_->best_val_miou : -1.0; }

 private:
  std::optional<std::filesystem::path> path_;
  std::optional<CheckpointBundle> best_;
};

// Encoder and model wiring shared by training, evaluation and inference.
class Pipeline {
 public:
  explicit Pipeline(const ModelConfig& config);

  const SurrogateEncoder& encoder() const noexcept { return encoder_; }
  SegmentationModel<float>& model() noexcept { return model_; }
  const SegmentationModel<float>& model() const noexcept { return model_; }

  EncodedSample<float> encode(const Image& image) const;
  Mask predict(const EncodedSample<float>& sample, bool use_refinement) const;

 private:
  SurrogateEncoder encoder_;
  SegmentationModel<float> model_;
};

struct TrainResult {
  CheckpointBundle best;
  TrainHistory history;
  std::uint64_t encoder_checksum_before = 0;
  std::uint64_t encoder_checksum_after = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

std::uint64_t config_fingerprint(const TrainConfig& config);

// Full training run on `dataset`, split into train/val with config.val_fraction and
// config.seed. Deterministic given (config, dataset).
TrainResult train(const TrainConfig& config, std::span<const SceneSample> dataset,
                  const EpochCallback& on_epoch = {});

// Greedy-action evaluation; never mutates weights or baseline state.
MetricsReport validate(const Pipeline& pipeline, std::span<const EncodedSample<float>> encoded,
                       std::span<const Mask> masks, AblationMode mode);
MetricsReport validate(const Pipeline& pipeline, std::span<const SceneSample> samples, AblationMode mode);

// Rebuilds a pipeline from a checkpoint's embedded configuration and weights.
Pipeline pipeline_from_checkpoint(const CheckpointBundle& bundle, TrainConfig* config_out = nullptr);

struct AblationRow {
  AblationMode mode;
  std::string label;
  std::vector<double> miou;  // one per seed
  std::vector<double> dice;
  std::vector<TrainHistory> histories;
  double miou_mean = 0.0;
  double miou_std = 0.0;
  double dice_mean = 0.0;
  double dice_std = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // baseline, curriculum, curriculum + RL
  std::vector<std::uint64_t> seeds;
};

// Trains all three configurations on identical data with seeds base.seed + s.
AblationTable run_ablation(const TrainConfig& base, std::span<const SceneSample> dataset, int num_seeds,
                           const std::function<void(AblationMode, std::uint64_t, const TrainResult&)>& on_run = {});

// Text table (mean +/- population stddev, in percent) with the published reference
// values as a footer.
std::string format_ablation_table(const AblationTable& table);

}  // namespace cliprl
