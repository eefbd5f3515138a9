#include "cliprl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cliprl/errors.hpp"

namespace cliprl {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& v) {
  double out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

long long parse_int(const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct KeyImpl {
  ConfigKey meta;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_KEY(NAME, FIELD, DESC)                                                                 \
  KeyImpl{{NAME, "", DESC},                                                                        \
          [](RunConfig& c, const std::string& v) { c.FIELD = static_cast<decltype(c.FIELD)>(parse_int(v)); }, \
          [](const RunConfig& c) { return std::to_string(c.FIELD); }}
#define U64_KEY(NAME, FIELD, DESC)                                                                 \
  KeyImpl{{NAME, "", DESC}, [](RunConfig& c, const std::string& v) { c.FIELD = parse_u64(v); },    \
          [](const RunConfig& c) { return std::to_string(c.FIELD); }}
#define DOUBLE_KEY(NAME, FIELD, DESC)                                                              \
  KeyImpl{{NAME, "", DESC}, [](RunConfig& c, const std::string& v) { c.FIELD = parse_double(v); }, \
          [](const RunConfig& c) { return fmt_double(c.FIELD); }}
#define BOOL_KEY(NAME, FIELD, DESC)                                                                \
  KeyImpl{{NAME, "", DESC}, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(v); },   \
          [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }}

std::vector<KeyImpl> build_keys() {
  std::vector<KeyImpl> keys{
      INT_KEY("dataset.num_samples", dataset.num_samples, "number of synthetic scenes"),
      INT_KEY("dataset.height", dataset.height, "image height in pixels (power of two, equal to width)"),
      INT_KEY("dataset.width", dataset.width, "image width in pixels (power of two, equal to height)"),
      INT_KEY("dataset.num_classes", dataset.num_classes,
              "number of classes K (0 background, 1 organ, 2 instrument, 3 thread, extra blobs beyond)"),
      U64_KEY("dataset.seed", dataset.seed, "scene generator seed"),
      INT_KEY("dataset.thin_structure_width", dataset.thin_structure_width, "thread stroke width in pixels"),
      INT_KEY("encoder.patch_size", train.model.encoder.patch_size, "encoder patch size (divides the image side)"),
      INT_KEY("encoder.embed_dim", train.model.encoder.embed_dim, "encoder token width D"),
      INT_KEY("encoder.num_layers", train.model.encoder.num_layers, "number of frozen encoder blocks"),
      KeyImpl{{"encoder.tap_layers", "", "comma-separated encoder layers used for fusion and skips, or 'all'"},
              [](RunConfig& c, const std::string& v) {
                c.train.model.encoder.tap_layers.clear();
                if (v == "all" || v.empty()) return;
                for (const auto& item : split_list(v))
                  c.train.model.encoder.tap_layers.push_back(static_cast<int>(parse_int(item)));
              },
              [](const RunConfig& c) {
                const auto& taps = c.train.model.encoder.tap_layers;
                if (taps.empty()) return std::string("all");
                std::string s;
                for (std::size_t i = 0; i < taps.size(); ++i) s += (i ? "," : "") + std::to_string(taps[i]);
                return s;
              }},
      U64_KEY("encoder.weight_seed", train.model.encoder.weight_seed, "seed of the surrogate encoder weights"),
      KeyImpl{{"encoder.weight_file", "", "pretrained encoder weight container; empty uses the seeded surrogate"},
              [](RunConfig& c, const std::string& v) {
                if (v.empty()) {
                  c.train.model.encoder.weight_file.reset();
                } else {
                  c.train.model.encoder.weight_file = v;
                }
              },
              [](const RunConfig& c) {
                return c.train.model.encoder.weight_file ? c.train.model.encoder.weight_file->string() : std::string();
              }},
      INT_KEY("decoder.fused_dim", train.model.fused_dim, "channels of the fused feature map (D_dec)"),
      INT_KEY("decoder.min_channels", train.model.min_channels, "floor of the per-stage channel halving"),
      BOOL_KEY("decoder.use_skips", train.model.use_skips, "merge encoder/image skip features into decoder stages"),
      INT_KEY("train.epochs", train.epochs, "number of training epochs"),
      INT_KEY("train.batch_size", train.batch_size, "samples per optimizer step"),
      DOUBLE_KEY("train.learning_rate", train.learning_rate, "Adam learning rate"),
      U64_KEY("train.seed", train.seed, "seed for initialization, split, shuffling and action sampling"),
      DOUBLE_KEY("train.val_fraction", train.val_fraction, "fraction of the dataset held out for validation"),
      KeyImpl{{"train.mode", "", "baseline | curriculum | curriculum_rl"},
              [](RunConfig& c, const std::string& v) { c.train.mode = parse_mode(v); },
              [](const RunConfig& c) { return to_string(c.train.mode); }},
      DOUBLE_KEY("train.beta1", train.beta1, "Adam first-moment decay"),
      DOUBLE_KEY("train.beta2", train.beta2, "Adam second-moment decay"),
      DOUBLE_KEY("train.adam_eps", train.adam_eps, "Adam epsilon"),
      DOUBLE_KEY("train.grad_clip", train.grad_clip, "global gradient-norm clip (<= 0 disables)"),
      DOUBLE_KEY("train.baseline_momentum", train.baseline_momentum, "reward baseline EMA momentum"),
      DOUBLE_KEY("loss.w_ce", train.loss_weights.w_ce, "cross-entropy weight in the segmentation loss"),
      DOUBLE_KEY("loss.w_dice", train.loss_weights.w_dice, "Dice-loss weight in the segmentation loss"),
      DOUBLE_KEY("loss.dice_smooth", train.loss_weights.dice_smooth, "soft-Dice smoothing constant"),
      KeyImpl{{"rl.actions", "", "comma-separated residual scaling factors (must contain 0)"},
              [](RunConfig& c, const std::string& v) {
                c.train.model.actions.alphas.clear();
                for (const auto& item : split_list(v)) c.train.model.actions.alphas.push_back(parse_double(item));
              },
              [](const RunConfig& c) {
                std::string s;
                const auto& a = c.train.model.actions.alphas;
                for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + fmt_double(a[i]);
                return s;
              }},
      KeyImpl{{"output.dir", "", "directory for all outputs"},
              [](RunConfig& c, const std::string& v) { c.out_dir = v; },
              [](const RunConfig& c) { return c.out_dir.string(); }},
  };
  const RunConfig defaults;
  for (auto& k : keys) k.meta.default_value = k.get(defaults);
  return keys;
}

#undef INT_KEY
#undef U64_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY

const std::vector<KeyImpl>& key_impls() {
  static const std::vector<KeyImpl> keys = build_keys();
  return keys;
}

}  // namespace

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.model.image_side = dataset.height;
  t.model.num_classes = dataset.num_classes;
  return t;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& k : key_impls()) out.push_back(k.meta);
    return out;
  }();
  return keys;
}

RunConfig parse_config(const std::string& text, const std::string& source_name) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source_name + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& keys = key_impls();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const KeyImpl& k) { return k.meta.name == key; });
    if (it == keys.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->set(config, value);
    } catch (const Error& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& k : key_impls()) out += k.meta.name + " = " + k.get(config) + "\n";
  return out;
}

RunConfig run_config_from_train(const TrainConfig& train) {
  RunConfig rc;
  rc.train = train;
  rc.train.checkpoint_path.reset();
  rc.dataset.height = train.model.image_side;
  rc.dataset.width = train.model.image_side;
  rc.dataset.num_classes = train.model.num_classes;
  return rc;
}

std::string config_reference() {
  std::ostringstream os;
  os << "Configuration keys (file format: one 'key = value' per line, '#' comments):\n";
  for (const auto& k : config_keys()) {
    os << "  " << k.name << " (default: " << (k.default_value.empty() ? "<empty>" : k.default_value) << ")\n"
       << "      " << k.description << "\n";
  }
  return os.str();
}

}  // namespace cliprl
