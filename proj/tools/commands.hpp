#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include "cliprl/config.hpp"
#include "cliprl/metrics.hpp"
#include "cliprl/trainer.hpp"

namespace cliprl::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigFailure = 2,
  kIoFailure = 3,
  kDivergence = 4,
};

int exit_code_for(const std::exception& e);

// Overrides shared by most subcommands (--seed, --epochs, --mode, --out).
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> mode;
  std::optional<std::filesystem::path> out_dir;
};

RunConfig resolve_config(const std::optional<std::filesystem::path>& config_path, const Overrides& overrides);

// Fixed overlay colours (RGB, 0-255) per class id; background is not tinted.
std::array<unsigned char, 3> class_color(int class_id);

struct GenerateSummary {
  int samples = 0;
  std::vector<std::size_t> histogram;
};

// Writes images/, masks/ and manifest.txt under out_dir. Refuses a non-empty out_dir unless force.
GenerateSummary cmd_generate(const RunConfig& config, const std::filesystem::path& out_dir, bool force);

// Loads (image, mask, id) triples listed in a manifest, resizing images to `side`.
std::vector<SceneSample> load_manifest_dataset(const std::filesystem::path& manifest, int side);

struct TrainOutputs {
  TrainResult result;
  std::filesystem::path checkpoint;
  std::filesystem::path history;
};

// Trains and writes checkpoint.bin, history.tsv, config.txt and plots/*.svg under config.out_dir.
TrainOutputs cmd_train(const RunConfig& config, const std::optional<std::filesystem::path>& manifest, bool force);

// Evaluates a checkpoint on a dataset and writes report.json / report.txt to out_dir.
// With val_only, only the validation split recreated from the checkpoint's seed and
// val_fraction is scored.
MetricsReport cmd_eval(const std::filesystem::path& checkpoint, const std::vector<SceneSample>& samples,
                       bool val_only, const std::filesystem::path& out_dir);

struct InferOutputs {
  Mask mask;
  std::filesystem::path mask_path;
  std::filesystem::path overlay_path;
  std::optional<std::filesystem::path> error_path;
  std::size_t false_positive_pixels = 0;  // predicted foreground on background
  std::size_t false_negative_pixels = 0;  // predicted background on foreground
  std::size_t confused_pixels = 0;        // wrong foreground class
};

InferOutputs cmd_infer(const std::filesystem::path& checkpoint, const std::filesystem::path& image_path,
                       const std::optional<std::filesystem::path>& gt_path, const std::filesystem::path& out_dir);

// Runs the three-configuration ablation and writes ablation.txt, ablation.json and
// runs/<mode>_seed<k>.tsv (one history per run).
AblationTable cmd_ablate(const RunConfig& config, int seeds, const std::optional<std::filesystem::path>& manifest,
                         bool force);

}  // namespace cliprl::cli
