#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cliprl/dataset.hpp"
#include "cliprl/decoder.hpp"
#include "cliprl/errors.hpp"
#include "cliprl/losses.hpp"
#include "cliprl/metrics.hpp"
#include "cliprl/rl_refine.hpp"
#include "cliprl/trainer.hpp"
#include "test_support.hpp"

namespace {

using namespace cliprl;
namespace fs = std::filesystem;

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

// 1
Outcome curriculum_schedule() {
  Outcome o;
  o.require(curriculum_factor(0, 30) == 1.0, "f(0,T) != 1");
  o.require(curriculum_factor(30, 30) == 0.0, "f(T,T) != 0");
  for (int t = 2; t <= 100; t += 2) o.require(curriculum_factor(t / 2, t) == 0.25, "f(T/2,T) != 0.25 for T=" + std::to_string(t));
  for (int t = 1; t <= 100; ++t) {
    for (int e = 0; e <= t; ++e) {
      const double ref = (1.0 - double(e) / t) * (1.0 - double(e) / t);
      o.require(std::abs(curriculum_factor(e, t) - ref) <= 1e-12, "f deviates from (1-e/T)^2");
      if (e > 0) o.require(curriculum_factor(e, t) <= curriculum_factor(e - 1, t), "f not monotone");
    }
  }
  o.detail = o.ok ? "T in 1..100 checked" : o.detail;
  return o;
}

// 2
Outcome hybrid_loss() {
  Outcome o;
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const double s = rng.uniform(-10, 10), r = rng.uniform(-10, 10), f = rng.uniform();
    const double l = total_loss(s, r, f);
    o.require(l >= std::min(s, r) && l <= std::max(s, r), "interpolation bound violated");
    o.require(total_loss(s, r, 1.0) == s, "f=1 endpoint");
    o.require(total_loss(s, r, 0.0) == r, "f=0 endpoint");
  }
  if (o.ok) o.detail = "10000 random triples";
  return o;
}

// 3
Outcome refinement_identity() {
  Outcome o;
  Rng rng(3);
  const ActionSpace actions;
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const int k = rng.uniform_int(2, 5), h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
    const auto z = testing::random_tensor<float>(rng, k, h, w, -5, 5);
    const auto r = testing::random_tensor<float>(rng, k, h, w, -5, 5);
    o.require(refine(z, 0.0, r) == z, "alpha = 0 is not bit-identical");
    const double alpha = actions.alphas[rng.uniform_index(actions.size())];
    const auto out = refine(z, alpha, r);
    for (std::size_t j = 0; j < z.size(); ++j)
      worst = std::max(worst, std::abs((double(out.data()[j]) - z.data()[j]) - alpha * r.data()[j]));
  }
  o.require(worst <= 1e-6, fmt("max |O - z - a r| = %.3g", worst));
  if (o.ok) o.detail = fmt("1000 tensors, max deviation %.3g", worst);
  return o;
}

// 4
Outcome policy_gradient() {
  Outcome o;
  Rng rng(4);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    PolicyNetwork<float> policy(8, ActionSpace{});
    policy.init(rng);
    for (auto& v : policy.fc2().weight().value) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    const auto pooled = testing::random_tensor<float>(rng, 8, 1, 1);
    const auto out = policy.forward(pooled.values(), PolicyMode::kSample, &rng);
    const double reward = rng.uniform(0.1, 1.0), baseline = rng.uniform(-1.0, 0.0);  // advantage > 0

    typename PolicyNetwork<float>::Trace trace;
    policy.action_probabilities(pooled.values(), &trace);
    for (auto* p : policy.parameters()) p->zero_grad();
    policy.backward(policy_loss_grad_logits<float>(trace.probs, out.sampled_index, reward - baseline), trace);

    auto loss = [&] {
      const auto pr = policy.action_probabilities(pooled.values());
      return policy_loss(std::log(double(pr[out.sampled_index])), reward, baseline);
    };
    auto& w = policy.fc2().weight();
    std::vector<double> analytic(w.grad.begin(), w.grad.end()), numeric;
    for (std::size_t i = 0; i < w.size(); ++i) numeric.push_back(testing::central_difference(w.value, i, 1e-2, loss));
    worst = std::max(worst, testing::vector_rel_error(analytic, numeric));

    const double before = trace.probs[out.sampled_index];
    for (std::size_t i = 0; i < w.size(); ++i) w.value[i] -= static_cast<float>(1e-2 * w.grad[i]);
    const double after = policy.action_probabilities(pooled.values())[out.sampled_index];
    o.require(after > before, "chosen-action probability did not increase on trial " + std::to_string(trial));
  }
  o.require(worst < 1e-3, fmt("worst relative error %.3g", worst));
  if (o.ok) o.detail = fmt("20 instances, worst relative error %.3g, sign property 20/20", worst);
  return o;
}

// 5
Outcome seg_loss_gradients() {
  Outcome o;
  Rng rng(5);
  double worst = 0;
  const LossWeights w;
  for (int trial = 0; trial < 20; ++trial) {
    const Mask gt = testing::random_mask(rng, 4, 4, 2);
    auto z = testing::random_tensor<float>(rng, 2, 4, 4, -2, 2);
    const auto p = softmax_pixelwise(z);
    const auto g = softmax_backward(p, seg_loss_grad_probs(p, gt, w));
    std::vector<float> zv(z.values().begin(), z.values().end());
    auto loss = [&] {
      std::copy(zv.begin(), zv.end(), z.data());
      return seg_loss(softmax_pixelwise(z), gt, w);
    };
    std::vector<double> analytic(g.values().begin(), g.values().end()), numeric;
    for (std::size_t i = 0; i < zv.size(); ++i) numeric.push_back(testing::central_difference(zv, i, 1e-2, loss));
    worst = std::max(worst, testing::vector_rel_error(analytic, numeric));
  }
  o.require(worst < 1e-3, fmt("worst relative error %.3g", worst));
  if (o.ok) o.detail = fmt("20 trials, worst relative error %.3g", worst);
  return o;
}

// 6
Outcome metrics_oracle() {
  Outcome o;
  Rng rng(6);
  for (int trial = 0; trial < 1000 && o.ok; ++trial) {
    const int k = rng.uniform_int(2, 5);
    const Mask gt = testing::random_mask(rng, 8, 8, k), pred = testing::random_mask(rng, 8, 8, k);
    ConfusionCounts counts(k);
    counts.add(pred, gt);
    const auto iou = iou_per_class(counts);
    const auto dice = dice_per_class(counts);
    double sum_iou = 0, sum_dice = 0;
    int present = 0;
    for (int c = 0; c < k; ++c) {
      std::uint64_t tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < 64; ++i) {
        const bool p = pred.labels[i] == c, g = gt.labels[i] == c;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
      }
      o.require(counts.tp[c] == tp && counts.fp[c] == fp && counts.fn[c] == fn, "confusion counts differ");
      if (tp + fp + fn == 0) {
        o.require(!iou[c] && !dice[c], "absent class reported");
        continue;
      }
      const double ref_iou = double(tp) / (tp + fp + fn), ref_dice = 2.0 * tp / (2.0 * tp + fp + fn);
      if (!iou[c] || !dice[c]) {
        o.require(false, "present class missing from report");
        continue;
      }
      o.require(std::abs(*iou[c] - ref_iou) <= 1e-12, "IoU differs");
      o.require(std::abs(*dice[c] - ref_dice) <= 1e-12, "Dice differs");
      o.require(std::abs(*dice[c] - 2 * *iou[c] / (1 + *iou[c])) <= 1e-12, "Dice/IoU identity");
      sum_iou += ref_iou;
      sum_dice += ref_dice;
      ++present;
    }
    const auto report = make_report(counts, 1);
    o.require(std::abs(report.mean_iou - sum_iou / present) <= 1e-12, "mIoU differs");
    o.require(std::abs(report.dice - sum_dice / present) <= 1e-12, "mean Dice differs");
  }
  if (o.ok) o.detail = "1000 random 8x8 pairs";
  return o;
}

// 7
Outcome shape_contract() {
  Outcome o;
  Rng rng(7);
  int checked = 0;
  for (int side : {32, 64, 128}) {
    for (int patch : {4, 8, 16}) {
      if (side % patch != 0) continue;
      DecoderConfig c;
      c.grid_size = side / patch;
      c.image_side = side;
      c.fused_dim = 32;
      c.min_channels = 8;
      c.num_taps = 2;
      c.tap_dim = 8;
      Decoder<float> dec(c);
      dec.init(rng);
      BasicFeatureMap<float> fused{testing::random_tensor<float>(rng, c.fused_dim, c.grid_size, c.grid_size), -1};
      std::vector<BasicFeatureMap<float>> taps;
      for (int t = 0; t < 2; ++t) taps.push_back({testing::random_tensor<float>(rng, 8, c.grid_size, c.grid_size), t});
      const auto image = testing::random_tensor<float>(rng, 3, side, side, 0, 1);
      const auto logits = dec.forward(fused, dec.prepare_skips(taps, image));
      o.require(logits.height() == side && logits.width() == side,
                "output size mismatch at side " + std::to_string(side) + ", patch " + std::to_string(patch));
      const auto p = softmax_pixelwise(logits);
      const std::size_t plane = std::size_t(side) * side;
      for (std::size_t i = 0; i < plane; ++i) {
        double sum = 0;
        for (int k = 0; k < c.num_classes; ++k) sum += p.data()[k * plane + i];
        o.require(std::abs(sum - 1.0) <= 1e-6, "softmax does not sum to 1");
      }
      ++checked;
    }
  }
  if (o.ok) o.detail = std::to_string(checked) + " geometries";
  return o;
}

std::vector<SceneSample> default_dataset(int n = 200) {
  DatasetConfig d;
  d.num_samples = n;
  return generate_dataset(d);
}

// 8
Outcome frozen_encoder() {
  Outcome o;
  TrainConfig c;
  c.epochs = 3;
  const auto data = default_dataset(20);
  const auto before = Pipeline(c.model).encoder().weights_checksum();
  const auto result = train(c, data);
  o.require(result.encoder_checksum_before == before, "checksum before training differs from a fresh encoder");
  o.require(result.encoder_checksum_after == result.encoder_checksum_before, "encoder weights changed");
  if (o.ok) o.detail = "checksum " + std::to_string(before) + " unchanged after 3 epochs";
  return o;
}

// 9
std::optional<TrainResult> desk_run;

Outcome desk_learning() {
  Outcome o;
  TrainConfig c;  // 30 epochs, curriculum_rl, seed 0
  const auto data = default_dataset();
  desk_run = train(c, data, [](const EpochRecord& e) {
    std::fprintf(stderr, "  [9] epoch %2d  val mIoU %.4f\n", e.epoch, e.val_miou);
  });
  const auto& h = desk_run->history.epochs;
  const double best = desk_run->best.best_val_miou, first = h.front().val_miou, last = h.back().val_miou;
  o.require(h.size() == 30, "history length");
  o.require(best >= 0.70, fmt("best val mIoU %.4f < 0.70", best));
  o.require(last > first, fmt("final val mIoU %.4f does not exceed epoch-0 %.4f", last, first));
  if (o.ok) o.detail = fmt("best val mIoU %.4f, epoch 0 %.4f, final %.4f", best, first, last);
  return o;
}

// 10
Outcome ablation() {
  Outcome o;
  TrainConfig base;
  const auto data = default_dataset();
  const auto table = run_ablation(base, data, 3, [](AblationMode m, std::uint64_t seed, const TrainResult& r) {
    std::fprintf(stderr, "  [10] %s seed %llu: best val mIoU %.6f\n", to_string(m).c_str(),
                 static_cast<unsigned long long>(seed), r.best.best_val_miou);
  });
  std::printf("%s", format_ablation_table(table).c_str());
  o.require(table.rows.size() == 3, "table does not have 3 rows");
  if (!o.ok) return o;
  const auto& baseline = table.rows[0];
  const auto& rl = table.rows[2];
  // The seed-0 curriculum_rl run repeats criterion 9's configuration exactly.
  if (desk_run) {
    const double diff = std::abs(rl.miou[0] - desk_run->best.best_val_miou);
    o.require(diff <= 1e-6, fmt("re-run differs by %.3g", diff));
    o.require(history_to_text(rl.histories[0]) == history_to_text(desk_run->history), "re-run history differs");
  } else {
    const auto again = train(base, data);
    o.require(std::abs(rl.miou[0] - again.best.best_val_miou) <= 1e-6, "re-run differs");
  }
  o.require(rl.miou_mean >= baseline.miou_mean - 0.01,
            fmt("curriculum_rl mean %.4f < baseline mean %.4f - 0.01", rl.miou_mean, baseline.miou_mean));
  const bool monotone = table.rows[0].miou_mean <= table.rows[1].miou_mean && table.rows[1].miou_mean <= rl.miou_mean;
  std::printf("monotone trend baseline <= curriculum <= curriculum+RL: %s (reported, not asserted)\n",
              monotone ? "yes" : "no");
  if (o.ok)
    o.detail = fmt("mean mIoU baseline %.4f, curriculum %.4f, curriculum+RL %.4f", baseline.miou_mean,
                   table.rows[1].miou_mean, rl.miou_mean);
  return o;
}

// 11
Outcome checkpoint_round_trip() {
  Outcome o;
  testing::TempDir dir("acceptance_ckpt");
  TrainConfig c;
  c.epochs = 2;
  c.checkpoint_path = dir.path() / "best.bin";
  const auto data = default_dataset(20);
  const auto result = train(c, data);
  const auto loaded = load_checkpoint(*c.checkpoint_path);
  TrainConfig restored;
  const Pipeline pipeline = pipeline_from_checkpoint(loaded, &restored);
  const auto split = split_dataset(data, restored.val_fraction, restored.seed);
  const double miou = validate(pipeline, split.val, restored.mode).mean_iou;
  o.require(std::abs(miou - result.best.best_val_miou) <= 1e-6,
            fmt("re-validated %.6f vs recorded %.6f", miou, result.best.best_val_miou));

  std::string bytes;
  {
    std::ifstream in(*c.checkpoint_path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    bytes = ss.str();
  }
  bytes[bytes.size() / 2] ^= 0x40;
  const auto corrupt = dir.path() / "corrupt.bin";
  std::ofstream(corrupt, std::ios::binary) << bytes;
  bool rejected = false;
  try {
    load_checkpoint(corrupt);
  } catch (const IntegrityError&) {
    rejected = true;
  }
  o.require(rejected, "corrupted checkpoint was not rejected with an integrity error");
  if (o.ok) o.detail = fmt("re-validated mIoU %.6f matches; corruption rejected", miou);
  return o;
}

// 12
Outcome split_protocol() {
  Outcome o;
  const auto data = default_dataset();
  const auto a = split_dataset(data, 0.2, 0), b = split_dataset(data, 0.2, 0), other = split_dataset(data, 0.2, 1);
  o.require(a.val.size() == 40 && a.train.size() == 160, "partition sizes are not 160/40");
  std::set<std::string> val_ids, train_ids;
  for (const auto& s : a.val) val_ids.insert(s.id);
  for (const auto& s : a.train) train_ids.insert(s.id);
  for (const auto& id : val_ids) o.require(!train_ids.count(id), "train and val overlap");
  o.require(val_ids.size() + train_ids.size() == 200, "partition does not cover the dataset");
  bool same = a.val.size() == b.val.size();
  for (std::size_t i = 0; same && i < a.val.size(); ++i) same = a.val[i].id == b.val[i].id;
  o.require(same, "split is not deterministic");
  bool differs = false;
  for (std::size_t i = 0; i < a.val.size(); ++i) differs |= a.val[i].id != other.val[i].id;
  o.require(differs, "different seeds give the same split");
  if (o.ok) o.detail = "160/40, disjoint, deterministic";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "curriculum schedule", 1, curriculum_schedule},
      {2, "hybrid loss", 1, hybrid_loss},
      {3, "refinement identity", 1, refinement_identity},
      {4, "policy gradient", 10, policy_gradient},
      {5, "segmentation loss gradients", 10, seg_loss_gradients},
      {6, "metrics oracle", 30, metrics_oracle},
      {7, "shape contract", 30, shape_contract},
      {8, "frozen encoder", 120, frozen_encoder},
      {9, "desk-scale learning", 15 * 60, desk_learning},
      {10, "ablation harness", 45 * 60, ablation},
      {11, "checkpoint round trip", 120, checkpoint_round_trip},
      {12, "split protocol", 1, split_protocol},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.ok = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out.ok && secs >= c.limit_s) {
      out.ok = false;
      out.detail += fmt(" (took %.1f s, limit %.0f s)", secs, c.limit_s);
    }
    failures += !out.ok;
    std::printf("%s  %2d %-28s %9.2f s  %s\n", out.ok ? "PASS" : "FAIL", c.id, c.name, secs, out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
