#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cliprl/tensor.hpp"

namespace cliprl {

// Synthetic surgical-scene generator settings.
struct DatasetConfig {
  int num_samples = 200;
  int height = 64;
  int width = 64;
  int num_classes = 4;  // background, organ, instrument, thread
  std::uint64_t seed = 0;
  int thin_structure_width = 1;

  // Throws ConfigError unless height == width, both powers of two, K >= 2.
  void validate() const;
};

struct SceneSample {
  std::string id;
  Image image;
  Mask mask;
};

// Class names used in reports; classes beyond the built-in four are "class<k>".
std::string class_name(int class_id);

// Deterministic in (config.seed, index).
SceneSample generate_scene(const DatasetConfig& config, int index);

std::vector<SceneSample> generate_dataset(const DatasetConfig& config);

struct DatasetSplit {
  std::vector<SceneSample> train;
  std::vector<SceneSample> val;
};

// Random partition with |val| = round(val_fraction * N). Deterministic in seed.
DatasetSplit split_dataset(std::span<const SceneSample> samples, double val_fraction,
                           std::uint64_t seed);

// Pixel counts per class id in [0, num_classes).
std::vector<std::size_t> class_histogram(const Mask& mask, int num_classes);

}  // namespace cliprl
