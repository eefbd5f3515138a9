#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "cliprl/dataset.hpp"
#include "cliprl/errors.hpp"
#include "cliprl/metrics.hpp"
#include "commands.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cliprl;
using namespace cliprl::cli;

const char* kLayout = R"(Output layout (under --out):
  generate   images/<id>.png, masks/<id>.png (8-bit class ids), manifest.txt
  train      checkpoint.bin, history.tsv, config.txt, plots/{loss,miou,f_epoch}.svg
  eval       report.json, report.txt
  infer      <stem>_mask.png, <stem>_overlay.png, <stem>_errors.png (with --gt)
  ablate     ablation.txt, ablation.json, runs/<mode>_seed<k>.tsv

Overlay colours: organ (255,200,0), instrument (0,160,255), thread (255,0,255), background untinted.
Error map: red = false positive (background predicted as foreground), blue = false negative,
yellow = wrong foreground class, grey = correct.

Exit codes: 0 ok, 1 other failure, 2 config error, 3 I/O error, 4 numeric divergence.
Environment: CLIPRL_LOG=quiet|info|debug controls progress logging (stderr).
)";

struct CommonArgs {
  std::optional<std::string> config;
  Overrides overrides;
  bool force = false;
  std::optional<std::string> manifest;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool training) {
  cmd->add_option("--config", args.config, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.overrides.seed, "training seed (overrides train.seed)");
  cmd->add_option("--out", args.overrides.out_dir, "output directory (overrides output.dir)");
  cmd->add_flag("--force", args.force, "write into a non-empty output directory");
  if (training) {
    cmd->add_option("--epochs", args.overrides.epochs, "number of epochs (overrides train.epochs)");
    cmd->add_option("--mode", args.overrides.mode, "baseline | curriculum | curriculum_rl")
        ->check(CLI::IsMember({"baseline", "curriculum", "curriculum_rl"}));
    cmd->add_option("--manifest", args.manifest, "train on a generated dataset instead of regenerating it")
        ->check(CLI::ExistingFile);
  }
}

std::optional<fs::path> opt_path(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  return fs::path(*s);
}

void print_histogram(const GenerateSummary& summary) {
  std::size_t total = 0;
  for (auto n : summary.histogram) total += n;
  std::printf("%d samples\n", summary.samples);
  for (std::size_t c = 0; c < summary.histogram.size(); ++c) {
    std::printf("  %-12s %10zu px  %6.2f%%\n", class_name(static_cast<int>(c)).c_str(), summary.histogram[c],
                total ? 100.0 * summary.histogram[c] / total : 0.0);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curriculum + RL refined segmentation on frozen ViT features"};
  app.footer(std::string("\n") + kLayout + "\n" + config_reference());
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, ablate_args, eval_args, infer_args;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset to disk");
  add_common(gen, gen_args, false);

  auto* tr = app.add_subcommand("train", "train one configuration");
  add_common(tr, train_args, true);

  std::string eval_ckpt;
  bool eval_all = false;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, eval_args, false);
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint.bin from train")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", eval_args.manifest, "dataset manifest (default: regenerate from --config)")
      ->check(CLI::ExistingFile);
  ev->add_flag("--all", eval_all, "score every sample instead of the checkpoint's validation split");

  std::string infer_ckpt, infer_image;
  std::optional<std::string> infer_gt;
  auto* inf = app.add_subcommand("infer", "predict a mask for one image");
  add_common(inf, infer_args, false);
  inf->add_option("--checkpoint", infer_ckpt, "checkpoint.bin from train")->required()->check(CLI::ExistingFile);
  inf->add_option("--image", infer_image, "PNG image")->required()->check(CLI::ExistingFile);
  inf->add_option("--gt", infer_gt, "ground-truth mask PNG for an error map")->check(CLI::ExistingFile);

  int seeds = 3;
  auto* ab = app.add_subcommand("ablate", "train baseline, curriculum and curriculum_rl over several seeds");
  add_common(ab, ablate_args, true);
  ab->add_option("--seeds", seeds, "number of seeds per configuration")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      const RunConfig config = resolve_config(opt_path(gen_args.config), gen_args.overrides);
      print_histogram(cmd_generate(config, config.out_dir, gen_args.force));
    } else if (*tr) {
      const RunConfig config = resolve_config(opt_path(train_args.config), train_args.overrides);
      const TrainOutputs out = cmd_train(config, opt_path(train_args.manifest), train_args.force);
      std::printf("best val mIoU %.4f (epoch %d), checkpoint %s\n", out.result.best.best_val_miou,
                  out.result.best.epoch, out.checkpoint.string().c_str());
    } else if (*ev) {
      const RunConfig config = resolve_config(opt_path(eval_args.config), eval_args.overrides);
      const auto samples = eval_args.manifest ? load_manifest_dataset(*eval_args.manifest, config.dataset.height)
                                              : generate_dataset(config.dataset);
      const MetricsReport report = cmd_eval(eval_ckpt, samples, !eval_all, config.out_dir);
      std::cout << report_table(report);
    } else if (*inf) {
      const RunConfig config = resolve_config(opt_path(infer_args.config), infer_args.overrides);
      const InferOutputs out = cmd_infer(infer_ckpt, infer_image, opt_path(infer_gt), config.out_dir);
      std::printf("mask %s\noverlay %s\n", out.mask_path.string().c_str(), out.overlay_path.string().c_str());
      if (out.error_path) {
        std::printf("errors %s (fp %zu, fn %zu, confused %zu)\n", out.error_path->string().c_str(),
                    out.false_positive_pixels, out.false_negative_pixels, out.confused_pixels);
      }
    } else if (*ab) {
      const RunConfig config = resolve_config(opt_path(ablate_args.config), ablate_args.overrides);
      std::cout << format_ablation_table(cmd_ablate(config, seeds, opt_path(ablate_args.manifest), ablate_args.force));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOk;
}
