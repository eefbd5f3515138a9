#include <benchmark/benchmark.h>

#include "cliprl/dataset.hpp"
#include "cliprl/losses.hpp"
#include "cliprl/nn/layers.hpp"
#include "cliprl/trainer.hpp"

namespace {

using namespace cliprl;

Tensor<float> filled(int c, int h, int w, Rng& rng) {
  Tensor<float> t(c, h, w);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0)), side = static_cast<int>(state.range(1));
  Rng rng(1);
  nn::Conv2d<float> conv("c", ch, ch, 3);
  conv.init(nn::Init::kHeUniform, rng);
  const auto x = filled(ch, side, side, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
  state.SetItemsProcessed(state.iterations() * std::int64_t(ch) * ch * 9 * side * side);
}
BENCHMARK(BM_Conv3x3Forward)->Args({32, 64})->Args({64, 32})->Args({128, 16});

void BM_Conv3x3Backward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0)), side = static_cast<int>(state.range(1));
  Rng rng(2);
  nn::Conv2d<float> conv("c", ch, ch, 3);
  conv.init(nn::Init::kHeUniform, rng);
  const auto x = filled(ch, side, side, rng);
  nn::ConvTrace<float> trace;
  const auto y = conv.forward(x, &trace);
  const auto g = filled(ch, side, side, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(g, trace, true));
}
BENCHMARK(BM_Conv3x3Backward)->Args({32, 64})->Args({64, 32});

std::vector<SceneSample> scenes(int n) {
  DatasetConfig d;
  d.num_samples = n;
  return generate_dataset(d);
}

void BM_EncodeImage(benchmark::State& state) {
  const Pipeline pipeline{ModelConfig{}};
  const auto data = scenes(1);
  for (auto _ : state) benchmark::DoNotOptimize(pipeline.encode(data[0].image));
}
BENCHMARK(BM_EncodeImage)->Unit(benchmark::kMillisecond);

void BM_PredictCached(benchmark::State& state) {
  Pipeline pipeline{ModelConfig{}};
  pipeline.model().init(0);
  const auto data = scenes(1);
  const auto enc = pipeline.encode(data[0].image);
  const bool refine = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(pipeline.predict(enc, refine));
}
BENCHMARK(BM_PredictCached)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_DecoderTrainStep(benchmark::State& state) {
  Pipeline pipeline{ModelConfig{}};
  pipeline.model().init(0);
  const auto data = scenes(1);
  const auto enc = pipeline.encode(data[0].image);
  auto& model = pipeline.model();
  const auto fused = model.fuse().forward(enc.taps);
  const LossWeights w;
  for (auto _ : state) {
    typename Decoder<float>::Trace trace;
    const auto z = model.decoder().forward(fused, enc.skips, &trace);
    const auto p = softmax_pixelwise(z);
    for (auto* prm : model.decoder().parameters()) prm->zero_grad();
    benchmark::DoNotOptimize(model.decoder().backward(softmax_backward(p, seg_loss_grad_probs(p, data[0].mask, w)), trace));
  }
}
BENCHMARK(BM_DecoderTrainStep)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  const auto data = scenes(20);
  TrainConfig c;
  c.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(c, data));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
