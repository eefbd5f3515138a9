#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cliprl/dataset.hpp"
#include "cliprl/trainer.hpp"

namespace cliprl {

// Everything a CLI run needs, loaded from a plain-text "key = value" file.
struct RunConfig {
  DatasetConfig dataset;
  TrainConfig train;
  std::filesystem::path out_dir = "runs/default";

  // TrainConfig with model.image_side / model.num_classes taken from the dataset section.
  TrainConfig resolved_train() const;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string description;
};

// Every accepted key in file order; the single source for parsing, serialization and --help.
const std::vector<ConfigKey>& config_keys();

// Parses "key = value" lines; '#' starts a comment. Unknown keys and bad values throw
// ConfigError naming the line number.
RunConfig parse_config(const std::string& text, const std::string& source_name = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Canonical text form (every key, file order); parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

// Embeds a TrainConfig into a RunConfig (dataset size/classes from the model section).
RunConfig run_config_from_train(const TrainConfig& train);

// Human-readable key reference for --help.
std::string config_reference();

}  // namespace cliprl
