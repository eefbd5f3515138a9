#include "cliprl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cliprl/random.hpp"

namespace cliprl {
namespace {

constexpr std::size_t kHeadArrays = 4;   // patch weight, patch bias, cls, pos
constexpr std::size_t kBlockArrays = 12;

enum BlockArray : std::size_t {
  kLn1Gamma, kLn1Beta, kQ, kK, kV, kOut, kLn2Gamma, kLn2Beta, kFc1W, kFc1B, kFc2W, kFc2B
};

using Mat = nn::RowMatrix<float>;
using CMap = nn::ConstMatrixMap<float>;
using Map = nn::MatrixMap<float>;

void layer_norm(const Mat& x, const NamedArray& gamma, const NamedArray& beta, Mat& out) {
  out.resize(x.rows(), x.cols());
  const auto d = x.cols();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).cast<double>().mean();
    const double var = (x.row(r).cast<double>().array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (Eigen::Index c = 0; c < d; ++c)
      out(r, c) = static_cast<float>((x(r, c) - mean) * inv) * gamma.data[c] + beta.data[c];
  }
}

float gelu(float v) {
  const float k = std::sqrt(2.0f / std::numbers::pi_v<float>);
  return 0.5f * v * (1.0f + std::tanh(k * (v + 0.044715f * v * v * v)));
}

}  // namespace

std::vector<int> EncoderConfig::resolved_taps() const {
  if (!tap_layers.empty()) return tap_layers;
  std::vector<int> all(num_layers);
  for (int i = 0; i < num_layers; ++i) all[i] = i;
  return all;
}

void EncoderConfig::validate() const {
  if (patch_size < 1) throw ConfigError("encoder: patch_size must be >= 1");
  if (embed_dim < 1) throw ConfigError("encoder: embed_dim must be >= 1");
  if (num_layers < 1) throw ConfigError("encoder: num_layers must be >= 1");
  const auto taps = resolved_taps();
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i] < 0 || taps[i] >= num_layers) {
      throw ConfigError("encoder: tap layer " + std::to_string(taps[i]) + " outside [0, " +
                        std::to_string(num_layers) + ")");
    }
    if (i > 0 && taps[i] <= taps[i - 1]) throw ConfigError("encoder: tap_layers must be strictly increasing");
  }
}

SurrogateEncoder::SurrogateEncoder(EncoderConfig config, int image_side)
    : config_(std::move(config)), side_(image_side) {
  config_.validate();
  if (image_side <= 0 || image_side % config_.patch_size != 0) {
    throw ShapeError("encoder: image side " + std::to_string(image_side) +
                     " is not divisible by patch size " + std::to_string(config_.patch_size));
  }
  grid_ = image_side / config_.patch_size;
  taps_ = config_.resolved_taps();
  if (config_.weight_file) {
    load_weights(*config_.weight_file);
  } else {
    make_seeded_weights();
  }
}

std::vector<std::pair<std::string, std::vector<int>>> SurrogateEncoder::expected_layout() const {
  const int d = config_.embed_dim;
  const int p = config_.patch_size;
  std::vector<std::pair<std::string, std::vector<int>>> layout{
      {"patch_embed.weight", {d, 3 * p * p}},
      {"patch_embed.bias", {d}},
      {"cls_token", {d}},
      {"pos_embed", {grid_ * grid_ + 1, d}},
  };
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string b = "blocks." + std::to_string(l) + ".";
    layout.push_back({b + "ln1.gamma", {d}});
    layout.push_back({b + "ln1.beta", {d}});
    layout.push_back({b + "attn.q", {d, d}});
    layout.push_back({b + "attn.k", {d, d}});
    layout.push_back({b + "attn.v", {d, d}});
    layout.push_back({b + "attn.out", {d, d}});
    layout.push_back({b + "ln2.gamma", {d}});
    layout.push_back({b + "ln2.beta", {d}});
    layout.push_back({b + "mlp.fc1.weight", {2 * d, d}});
    layout.push_back({b + "mlp.fc1.bias", {2 * d}});
    layout.push_back({b + "mlp.fc2.weight", {d, 2 * d}});
    layout.push_back({b + "mlp.fc2.bias", {d}});
  }
  return layout;
}

void SurrogateEncoder::make_seeded_weights() {
  Rng rng(derive_seed(config_.weight_seed, 0xE4C0DEull));
  for (auto& [name, shape] : expected_layout()) {
    NamedArray a{name, shape, {}};
    a.data.resize(a.element_count());
    const bool is_gamma = name.ends_with("gamma");
    const bool is_bias = name.ends_with("beta") || name.ends_with("bias");
    double stddev = 0.0;
    if (name == "cls_token") {
      stddev = 0.5;
    } else if (name == "pos_embed") {
      stddev = 0.1;
    } else if (!is_gamma && !is_bias) {
      stddev = 1.0 / std::sqrt(static_cast<double>(shape[1]));
    }
    for (auto& v : a.data) v = is_gamma ? 1.0f : static_cast<float>(rng.normal(0.0, stddev));
    weights_.push_back(std::move(a));
  }
}

void SurrogateEncoder::load_weights(const std::filesystem::path& path) {
  auto arrays = read_weight_file(path);
  for (auto& [name, shape] : expected_layout()) {
    auto it = std::find_if(arrays.begin(), arrays.end(), [&](const NamedArray& a) { return a.name == name; });
    if (it == arrays.end()) throw ConfigError("encoder weight file " + path.string() + ": missing " + name);
    if (it->shape != shape) throw ShapeError("encoder weight file " + path.string() + ": bad shape for " + name);
    weights_.push_back(std::move(*it));
  }
}

std::vector<float> SurrogateEncoder::embed(const Image& image) const {
  if (image.height != side_ || image.width != side_) {
    throw ShapeError("encoder: expected " + std::to_string(side_) + "x" + std::to_string(side_) +
                     " image, got " + std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  const int d = config_.embed_dim;
  const int p = config_.patch_size;
  const int pdim = 3 * p * p;
  const int n = grid_ * grid_;
  // Patches flattened as (row, col, rgb); pixels mapped from [0, 1] to [-1, 1].
  Mat patches(n, pdim);
  for (int gy = 0; gy < grid_; ++gy)
    for (int gx = 0; gx < grid_; ++gx) {
      const int r = gy * grid_ + gx;
      for (int py = 0; py < p; ++py)
        for (int px = 0; px < p; ++px)
          for (int c = 0; c < 3; ++c)
            patches(r, (py * p + px) * 3 + c) = 2.0f * image.at(gy * p + py, gx * p + px, c) - 1.0f;
    }
  std::vector<float> tokens(static_cast<std::size_t>(n + 1) * d);
  Map x(tokens.data(), n + 1, d);
  x.row(0) = Eigen::Map<const Eigen::RowVectorXf>(weight(2).data.data(), d);
  x.bottomRows(n).noalias() = patches * CMap(weight(0).data.data(), d, pdim).transpose();
  x.bottomRows(n).rowwise() += Eigen::Map<const Eigen::RowVectorXf>(weight(1).data.data(), d);
  x += CMap(weight(3).data.data(), n + 1, d);
  return tokens;
}

void SurrogateEncoder::run_block(std::vector<float>& tokens, int layer) const {
  const int d = config_.embed_dim;
  const int t = grid_ * grid_ + 1;
  const std::size_t base = kHeadArrays + static_cast<std::size_t>(layer) * kBlockArrays;
  auto w = [&](BlockArray k) -> const NamedArray& { return weight(base + k); };
  Map x(tokens.data(), t, d);
  Mat h;
  layer_norm(x, w(kLn1Gamma), w(kLn1Beta), h);
  const Mat q = h * CMap(w(kQ).data.data(), d, d).transpose();
  const Mat k = h * CMap(w(kK).data.data(), d, d).transpose();
  const Mat v = h * CMap(w(kV).data.data(), d, d).transpose();
  Mat scores = (q * k.transpose()) / std::sqrt(static_cast<float>(d));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const float m = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - m).exp();
    scores.row(r) /= scores.row(r).sum();
  }
  x.noalias() += (scores * v) * CMap(w(kOut).data.data(), d, d).transpose();
  layer_norm(x, w(kLn2Gamma), w(kLn2Beta), h);
  Mat hidden = h * CMap(w(kFc1W).data.data(), 2 * d, d).transpose();
  hidden.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(w(kFc1B).data.data(), 2 * d);
  hidden = hidden.unaryExpr([](float v) { return gelu(v); });
  x.noalias() += hidden * CMap(w(kFc2W).data.data(), d, 2 * d).transpose();
  x.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(w(kFc2B).data.data(), d);
}

std::vector<FeatureMap> SurrogateEncoder::encode(const Image& image) const {
  std::vector<float> tokens = embed(image);
  std::vector<FeatureMap> out;
  out.reserve(taps_.size());
  std::size_t next = 0;
  for (int l = 0; l < config_.num_layers && next < taps_.size(); ++l) {
    run_block(tokens, l);
    if (taps_[next] == l) {
      out.push_back(drop_cls_and_reshape<float>(tokens, token_count(), config_.embed_dim, l));
      ++next;
    }
  }
  return out;
}

std::vector<float> SurrogateEncoder::tokens_after(const Image& image, int layer) const {
  if (layer < -1 || layer >= config_.num_layers) throw ArgumentError("tokens_after: layer out of range");
  std::vector<float> tokens = embed(image);
  for (int l = 0; l <= layer; ++l) run_block(tokens, l);
  return tokens;
}

std::uint64_t SurrogateEncoder::weights_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& a : weights_) {
    h = fnv1a64(a.name.data(), a.name.size(), h);
    h = fnv1a64(a.data.data(), a.data.size() * sizeof(float), h);
  }
  return h;
}

void SurrogateEncoder::export_weights(const std::filesystem::path& path) const {
  write_weight_file(path, weights_);
}

}  // namespace cliprl
