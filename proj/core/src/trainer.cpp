#include "cliprl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cliprl/config.hpp"
#include "cliprl/errors.hpp"
#include "cliprl/nn/adam.hpp"

namespace cliprl {

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::kBaseline: return "baseline";
    case AblationMode::kCurriculum: return "curriculum";
    case AblationMode::kCurriculumRl: return "curriculum_rl";
  }
  return "unknown";
}

AblationMode parse_mode(const std::string& text) {
  if (text == "baseline") return AblationMode::kBaseline;
  if (text == "curriculum") return AblationMode::kCurriculum;
  if (text == "curriculum_rl") return AblationMode::kCurriculumRl;
  throw ConfigError("unknown mode '" + text + "' (expected baseline | curriculum | curriculum_rl)");
}

std::string mode_label(AblationMode mode) {
  switch (mode) {
    case AblationMode::kBaseline: return "Baseline";
    case AblationMode::kCurriculum: return "Curriculum Learning";
    case AblationMode::kCurriculumRl: return "Curriculum Learning + RL";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("train: val_fraction must lie in (0, 1)");
  if (!(baseline_momentum >= 0 && baseline_momentum < 1)) throw ConfigError("train: baseline_momentum must lie in [0, 1)");
  loss_weights.validate();
  model.actions.validate();
  model.encoder.validate();
  model.decoder_config().validate();
}

std::string history_to_text(const TrainHistory& history) {
  std::ostringstream os;
  os << "epoch\tf_epoch\tseg_loss\trl_loss\ttotal_loss\tmean_reward\tbaseline\tval_miou\tval_dice\n";
  char line[256];
  for (const auto& e : history.epochs) {
    std::snprintf(line, sizeof(line), "%d\t%.17g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", e.epoch, e.f_epoch,
                  e.seg_loss, e.rl_loss, e.total_loss, e.mean_reward, e.baseline, e.val_miou, e.val_dice);
    os << line;
  }
  return os.str();
}

void save_history(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write history " + path.string());
  out << history_to_text(history);
  if (!out) throw IoError("write failed for history " + path.string());
}

std::uint64_t config_fingerprint(const TrainConfig& config) {
  const std::string text = to_text(run_config_from_train(config));
  return fnv1a64(text.data(), text.size());
}

Pipeline::Pipeline(const ModelConfig& config)
    : encoder_(config.encoder, config.image_side), model_(config) {}

EncodedSample<float> Pipeline::encode(const Image& image) const {
  return model_.prepare(encoder_.encode(image), image_to_tensor<float>(image));
}

Mask Pipeline::predict(const EncodedSample<float>& sample, bool use_refinement) const {
  return argmax_classes(model_.predict_logits(sample, use_refinement));
}

MetricsReport validate(const Pipeline& pipeline, std::span<const EncodedSample<float>> encoded,
                       std::span<const Mask> masks, AblationMode mode) {
  if (encoded.empty()) throw ArgumentError("validate: empty validation set");
  if (encoded.size() != masks.size()) throw ArgumentError("validate: sample/mask count mismatch");
  const bool refine = mode == AblationMode::kCurriculumRl;
  ConfusionCounts counts(pipeline.model().config().num_classes);
  for (std::size_t i = 0; i < encoded.size(); ++i) counts.add(pipeline.predict(encoded[i], refine), masks[i]);
  return make_report(counts, static_cast<int>(encoded.size()));
}

MetricsReport validate(const Pipeline& pipeline, std::span<const SceneSample> samples, AblationMode mode) {
  std::vector<EncodedSample<float>> encoded;
  std::vector<Mask> masks;
  for (const auto& s : samples) {
    encoded.push_back(pipeline.encode(s.image));
    masks.push_back(s.mask);
  }
  return validate(pipeline, encoded, masks, mode);
}

Pipeline pipeline_from_checkpoint(const CheckpointBundle& bundle, TrainConfig* config_out) {
  const TrainConfig config = parse_config(bundle.config_text, "<checkpoint config>").resolved_train();
  Pipeline pipeline(config.model);
  pipeline.model().import_arrays(bundle.weights);
  if (config_out) *config_out = config;
  return pipeline;
}

namespace {

struct StepStats {
  double seg = 0.0;
  double rl = 0.0;
  double total = 0.0;
  double reward = 0.0;
};

// One sample's forward and backward pass. Gradients are accumulated with `scale`
// (1 / batch size) so a batch step optimizes the batch-mean loss.
class SampleStep {
 public:
  SampleStep(SegmentationModel<float>& model, const TrainConfig& config) : model_(model), config_(config) {}

  StepStats run(const EncodedSample<float>& s, const Mask& gt, double f_epoch, double scale,
                BaselineState& baseline, Rng& rng) {
    StepStats st;
    const auto mode = config_.mode;
    const double seg_weight = mode == AblationMode::kBaseline ? 1.0 : f_epoch;

    FeatureFusion<float>::Trace ftrace;
    Decoder<float>::Trace dtrace;
    const auto fused = model_.fuse().forward(s.taps, &ftrace);
    LogitMap<float> z = model_.decoder().forward(fused, s.skips, &dtrace);

    if (mode != AblationMode::kCurriculumRl) {
      const ProbMap<float> p = softmax_pixelwise(z);
      st.seg = seg_loss(p, gt, config_.loss_weights);
      st.total = seg_weight * st.seg;
      Tensor<float> dp = seg_loss_grad_probs(p, gt, config_.loss_weights);
      for (auto& v : dp.values()) v *= static_cast<float>(seg_weight * scale);
      const Tensor<float> dz = softmax_backward(p, dp);
      model_.fuse().backward(model_.decoder().backward(dz, dtrace), ftrace);
      return st;
    }

    PolicyNetwork<float>::Trace ptrace;
    const PolicyOutput action = model_.policy().forward(s.pooled, PolicyMode::kSample, &rng, &ptrace);
    ResidualModule<float>::Trace rtrace;
    LogitMap<float> out = z;
    if (action.alpha != 0.0) out = refine(z, action.alpha, model_.residual().forward(z, &rtrace));
    const ProbMap<float> p = softmax_pixelwise(out);
    st.seg = seg_loss(p, gt, config_.loss_weights);

    // The reward and advantage are constants for backpropagation.
    st.reward = compute_reward(out, z, gt);
    const double advantage = baseline.initialized ? st.reward - baseline.value : 0.0;
    st.rl = baseline.initialized ? policy_loss(action.log_prob, st.reward, baseline.value) : 0.0;
    baseline = update_baseline(baseline, st.reward);
    st.total = total_loss(st.seg, st.rl, f_epoch);

    Tensor<float> dp = seg_loss_grad_probs(p, gt, config_.loss_weights);
    for (auto& v : dp.values()) v *= static_cast<float>(f_epoch * scale);
    Tensor<float> dz = softmax_backward(p, dp);
    if (action.alpha != 0.0) {
      Tensor<float> dr = dz;
      for (auto& v : dr.values()) v *= static_cast<float>(action.alpha);
      const Tensor<float> dz_res = model_.residual().backward(dr, rtrace);
      for (std::size_t i = 0; i < dz.size(); ++i) dz.data()[i] += dz_res.data()[i];
    }
    model_.fuse().backward(model_.decoder().backward(dz, dtrace), ftrace);

    std::vector<float> dlogits = policy_loss_grad_logits<float>(ptrace.probs, action.sampled_index, advantage);
    for (auto& v : dlogits) v *= static_cast<float>((1.0 - f_epoch) * scale);
    model_.policy().backward(dlogits, ptrace);
    return st;
  }

 private:
  SegmentationModel<float>& model_;
  const TrainConfig& config_;
};

void require_finite(const StepStats& st, int epoch, int batch) {
  if (!std::isfinite(st.seg) || !std::isfinite(st.rl) || !std::isfinite(st.total)) {
    throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch),
                          epoch, batch);
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const SceneSample> dataset, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw ArgumentError("train: empty dataset");
  for (const auto& s : dataset) {
    if (s.image.height != config.model.image_side || s.image.width != config.model.image_side) {
      throw ConfigError("train: sample " + s.id + " is " + std::to_string(s.image.height) + "x" +
                        std::to_string(s.image.width) + ", model expects side " +
                        std::to_string(config.model.image_side));
    }
  }
  const DatasetSplit split = split_dataset(dataset, config.val_fraction, config.seed);
  if (split.train.empty() || split.val.empty()) {
    throw ArgumentError("train: split leaves an empty train or validation set");
  }

  Pipeline pipeline(config.model);
  auto& model = pipeline.model();
  model.init(config.seed);

  TrainResult result;
  result.encoder_checksum_before = pipeline.encoder().weights_checksum();

  std::vector<EncodedSample<float>> train_enc, val_enc;
  std::vector<Mask> train_masks, val_masks;
  for (const auto& s : split.train) {
    train_enc.push_back(pipeline.encode(s.image));
    train_masks.push_back(s.mask);
  }
  for (const auto& s : split.val) {
    val_enc.push_back(pipeline.encode(s.image));
    val_masks.push_back(s.mask);
  }

  const auto params = model.parameters();
  nn::Adam<float> adam(params, {config.learning_rate, config.beta1, config.beta2, config.adam_eps});
  Rng rng(derive_seed(config.seed, 0x7EA1ull));
  BaselineState baseline{0.0, config.baseline_momentum, false};
  CheckpointKeeper keeper(config.checkpoint_path);
  const std::uint64_t fingerprint = config_fingerprint(config);
  const std::string config_text = to_text(run_config_from_train(config));
  SampleStep step(model, config);

  std::vector<std::size_t> order(train_enc.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double f = curriculum_factor(epoch, config.epochs);
    rng.shuffle(order.begin(), order.end());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.f_epoch = f;
    std::size_t seen = 0;
    int batch = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      nn::zero_grads(params);
      for (std::size_t i = start; i < end; ++i) {
        const auto idx = order[i];
        StepStats st;
        try {
          st = step.run(train_enc[idx], train_masks[idx], f, scale, baseline, rng);
        } catch (const DivergenceError&) {
          throw;
        } catch (const NumericError& e) {
          throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch) + ": " + e.what(),
                                epoch, batch);
        }
        require_finite(st, epoch, batch);
        rec.seg_loss += st.seg;
        rec.rl_loss += st.rl;
        rec.total_loss += st.total;
        rec.mean_reward += st.reward;
        ++seen;
      }
      if (config.grad_clip > 0) {
        const double norm = nn::clip_grad_norm(params, config.grad_clip);
        if (!std::isfinite(norm)) {
          throw DivergenceError("training diverged: non-finite gradient at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batch),
                                epoch, batch);
        }
      }
      adam.step();
    }
    rec.seg_loss /= static_cast<double>(seen);
    rec.rl_loss /= static_cast<double>(seen);
    rec.total_loss /= static_cast<double>(seen);
    rec.mean_reward /= static_cast<double>(seen);
    rec.baseline = baseline.value;

    MetricsReport report;
    try {
      report = validate(pipeline, val_enc, val_masks, config.mode);
    } catch (const NumericError& e) {
      throw DivergenceError("training diverged: validation after epoch " + std::to_string(epoch) + ": " + e.what(),
                            epoch, -1);
    }
    rec.val_miou = report.mean_iou;
    rec.val_dice = report.dice;
    result.history.epochs.push_back(rec);

    keeper.offer(report.mean_iou, [&] {
      CheckpointBundle b;
      b.weights = model.export_arrays();
      b.baseline = baseline;
      b.epoch = epoch;
      b.config_fingerprint = fingerprint;
      b.config_text = config_text;
      return b;
    });
    if (on_epoch) on_epoch(rec);
  }

  result.best = *keeper.best();
  result.encoder_checksum_after = pipeline.encoder().weights_checksum();
  return result;
}

namespace {
void mean_std(const std::vector<double>& v, double& mean, double& stddev) {
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  stddev = std::sqrt(sq / static_cast<double>(v.size()));
}
}  // namespace

AblationTable run_ablation(const TrainConfig& base, std::span<const SceneSample> dataset, int num_seeds,
                           const std::function<void(AblationMode, std::uint64_t, const TrainResult&)>& on_run) {
  if (num_seeds < 1) throw ArgumentError("run_ablation: num_seeds must be >= 1");
  AblationTable table;
  for (int s = 0; s < num_seeds; ++s) table.seeds.push_back(base.seed + static_cast<std::uint64_t>(s));
  for (const auto mode : {AblationMode::kBaseline, AblationMode::kCurriculum, AblationMode::kCurriculumRl}) {
    AblationRow row{mode, mode_label(mode), {}, {}, {}};
    for (const auto seed : table.seeds) {
      TrainConfig cfg = base;
      cfg.mode = mode;
      cfg.seed = seed;
      cfg.checkpoint_path.reset();
      const TrainResult r = train(cfg, dataset);
      // Scores of the retained (best-mIoU) checkpoint.
      const auto best = std::find_if(r.history.epochs.begin(), r.history.epochs.end(),
                                     [&](const EpochRecord& e) { return e.epoch == r.best.epoch; });
      row.miou.push_back(best->val_miou);
      row.dice.push_back(best->val_dice);
      row.histories.push_back(r.history);
      if (on_run) on_run(mode, seed, r);
    }
    mean_std(row.miou, row.miou_mean, row.miou_std);
    mean_std(row.dice, row.dice_mean, row.dice_std);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_ablation_table(const AblationTable& table) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-28s %18s %18s\n", "Configuration", "mIoU (%)", "Dice (%)");
  os << line << std::string(66, '-') << '\n';
  for (const auto& row : table.rows) {
    char miou[32], dice[32];
    std::snprintf(miou, sizeof(miou), "%.2f +/- %.2f", 100 * row.miou_mean, 100 * row.miou_std);
    std::snprintf(dice, sizeof(dice), "%.2f +/- %.2f", 100 * row.dice_mean, 100 * row.dice_std);
    std::snprintf(line, sizeof(line), "%-28s %18s %18s\n", row.label.c_str(), miou, dice);
    os << line;
  }
  os << std::string(66, '-') << '\n';
  os << "seeds: " << table.seeds.size() << " (";
  for (std::size_t i = 0; i < table.seeds.size(); ++i) os << (i ? ", " : "") << table.seeds[i];
  os << ")\n";
  os << "Reference (published results, mIoU / Dice): Baseline 72.4 / 75.1; "
        "Curriculum Learning 76.8 / 79.3; Curriculum Learning + RL 81.0 / 88.0\n";
  return os.str();
}

}  // namespace cliprl
