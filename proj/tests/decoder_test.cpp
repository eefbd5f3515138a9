#include <gtest/gtest.h>

#include "cliprl/decoder.hpp"
#include "cliprl/errors.hpp"
#include "cliprl/losses.hpp"
#include "test_support.hpp"

namespace cliprl {
namespace {

DecoderConfig config_for(int side, int patch, int k = 4, int taps = 2, int dim = 8) {
  DecoderConfig c;
  c.grid_size = side / patch;
  c.image_side = side;
  c.fused_dim = 32;
  c.min_channels = 8;
  c.num_classes = k;
  c.num_taps = taps;
  c.tap_dim = dim;
  return c;
}

template <typename T>
struct DecoderInputs {
  BasicFeatureMap<T> fused;
  std::vector<BasicFeatureMap<T>> taps;
  Tensor<T> image;
};

template <typename T>
DecoderInputs<T> random_inputs(Rng& rng, const DecoderConfig& c) {
  DecoderInputs<T> in;
  in.fused = {testing::random_tensor<T>(rng, c.fused_dim, c.grid_size, c.grid_size), -1};
  for (int i = 0; i < c.num_taps; ++i) in.taps.push_back({testing::random_tensor<T>(rng, c.tap_dim, c.grid_size, c.grid_size), i});
  in.image = testing::random_tensor<T>(rng, 3, c.image_side, c.image_side, 0.0, 1.0);
  return in;
}

TEST(Decoder, OutputMatchesInputSizeForAllGeometries) {
  Rng rng(1);
  for (int side : {32, 64, 128}) {
    for (int patch : {4, 8, 16}) {
      if (side % patch != 0) continue;
      const auto c = config_for(side, patch);
      Decoder<float> dec(c);
      dec.init(rng);
      const auto in = random_inputs<float>(rng, c);
      const auto logits = dec.forward(in.fused, dec.prepare_skips(in.taps, in.image));
      EXPECT_EQ(logits.height(), side);
      EXPECT_EQ(logits.width(), side);
      EXPECT_EQ(logits.channels(), 4);
      EXPECT_TRUE(logits.all_finite());
    }
  }
}

TEST(Decoder, StageCountFromGrid) {
  EXPECT_EQ(config_for(64, 8).num_stages(), 3);
  auto c = config_for(224, 16);
  EXPECT_EQ(c.grid_size, 14);
  EXPECT_EQ(c.num_stages(), 4);
  c.image_side = 100;
  EXPECT_THROW(c.num_stages(), ConfigError);
}

TEST(Decoder, ChannelScheduleHalvesToFloor) {
  auto c = config_for(128, 16);
  c.fused_dim = 64;
  c.min_channels = 16;
  EXPECT_EQ(c.stage_channels(), (std::vector<int>{32, 16, 16, 16}));
}

TEST(Decoder, SkipPlanForDefaultGeometry) {
  const auto plan = config_for(64, 8).skip_plan();
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan[0].source, SkipSource::kTap);
  EXPECT_EQ(plan[1].source, SkipSource::kImage);
  EXPECT_EQ(plan[2].source, SkipSource::kImage);
  auto off = config_for(64, 8);
  off.use_skips = false;
  for (const auto& s : off.skip_plan()) EXPECT_EQ(s.source, SkipSource::kNone);
}

TEST(Decoder, ImageSkipIsStandardizedPerChannel) {
  Rng rng(2);
  const auto img = testing::random_tensor<double>(rng, 3, 16, 16, 0.2, 0.7);
  const auto s = standardize_channels(img);
  for (int c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (int i = 0; i < 256; ++i) mean += s.data()[c * 256 + i];
    mean /= 256;
    for (int i = 0; i < 256; ++i) sq += (s.data()[c * 256 + i] - mean) * (s.data()[c * 256 + i] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / 256, 1.0, 1e-12);
  }
  Tensor<float> flat(1, 4, 4);
  std::fill(flat.values().begin(), flat.values().end(), 0.3f);
  const auto sf = standardize_channels(flat);
  for (float v : sf.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Decoder, ZeroHeadGivesZeroLogits) {
  Rng rng(3);
  const auto c = config_for(32, 8);
  Decoder<float> dec(c);
  dec.init(rng);
  std::fill(dec.head().weight().value.begin(), dec.head().weight().value.end(), 0.0f);
  std::fill(dec.head().bias().value.begin(), dec.head().bias().value.end(), 0.0f);
  const auto in = random_inputs<float>(rng, c);
  const auto z = dec.forward(in.fused, dec.prepare_skips(in.taps, in.image));
  for (float v : z.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Decoder, MismatchedFusedShapeIsRejected) {
  Rng rng(4);
  const auto c = config_for(32, 8);
  Decoder<float> dec(c);
  dec.init(rng);
  const auto in = random_inputs<float>(rng, c);
  BasicFeatureMap<float> wrong{testing::random_tensor<float>(rng, c.fused_dim, 8, 8), -1};
  EXPECT_THROW(dec.forward(wrong, dec.prepare_skips(in.taps, in.image)), ShapeError);
}

TEST(UpsampleStage, AllOnesKernelOnSingleImpulse) {
  nn::ConvTranspose2x2<double> up("up", 1, 1);
  std::fill(up.weight().value.begin(), up.weight().value.end(), 1.0);
  Tensor<double> x(1, 3, 3);
  x(0, 0, 0) = 1.0;
  const auto y = up.forward(x);
  ASSERT_EQ(y.height(), 6);
  ASSERT_EQ(y.width(), 6);
  for (int yy = 0; yy < 6; ++yy)
    for (int xx = 0; xx < 6; ++xx) EXPECT_EQ(y(0, yy, xx), (yy < 2 && xx < 2) ? 1.0 : 0.0);
}

TEST(UpsampleStage, ExactDoubling) {
  Rng rng(5);
  nn::ConvTranspose2x2<float> up("up", 4, 2);
  up.init(nn::Init::kHeUniform, rng);
  for (int s : {1, 7, 14, 16}) {
    const auto y = up.forward(testing::random_tensor<float>(rng, 4, s, s));
    EXPECT_EQ(y.height(), 2 * s);
    EXPECT_EQ(y.width(), 2 * s);
  }
}

TEST(Softmax, ZeroLogitsAreUniform) {
  Tensor<float> z(4, 3, 3);
  const auto p = softmax_pixelwise(z);
  for (float v : p.values()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  Tensor<float> z(2, 1, 1);
  z(0, 0, 0) = 1000.0f;
  const auto p = softmax_pixelwise(z);
  EXPECT_EQ(p(0, 0, 0), 1.0f);
  EXPECT_EQ(p(1, 0, 0), 0.0f);
}

TEST(Softmax, LogOneLogThree) {
  Tensor<double> z(2, 1, 1);
  z(0, 0, 0) = std::log(1.0);
  z(1, 0, 0) = std::log(3.0);
  const auto p = softmax_pixelwise(z);
  EXPECT_NEAR(p(0, 0, 0), 0.25, 1e-15);
  EXPECT_NEAR(p(1, 0, 0), 0.75, 1e-15);
}

TEST(Softmax, SumsToOneOnRandomLogits) {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto z = testing::random_tensor<float>(rng, 5, 2, 2, -30.0, 30.0);
    const auto p = softmax_pixelwise(z);
    for (int i = 0; i < 4; ++i) {
      double sum = 0;
      for (int c = 0; c < 5; ++c) {
        const float v = p.data()[c * 4 + i];
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
        sum += v;
      }
      ASSERT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(Softmax, NanIsANumericError) {
  Tensor<float> z(2, 1, 1);
  z(0, 0, 0) = std::nanf("");
  EXPECT_THROW(softmax_pixelwise(z), NumericError);
}

TEST(Argmax, TiesGoToLowestClass) {
  Tensor<float> z(3, 1, 2);
  z(1, 0, 0) = 1.0f;
  z(2, 0, 0) = 1.0f;
  const Mask m = argmax_classes(z);
  EXPECT_EQ(m.at(0, 0), 1);
  EXPECT_EQ(m.at(0, 1), 0);
}

template <typename T>
void check_gradients(double tol, double h) {
  Rng rng(7);
  auto c = config_for(16, 2, 2, 1, 4);
  c.fused_dim = 8;
  c.min_channels = 4;
  Decoder<T> dec(c);
  dec.init(rng);
  const auto in = random_inputs<T>(rng, c);
  const auto skips = dec.prepare_skips(in.taps, in.image);
  const Mask gt = testing::random_mask(rng, c.image_side, c.image_side, 2);
  const LossWeights w;
  auto loss = [&] { return seg_loss(softmax_pixelwise(dec.forward(in.fused, skips)), gt, w); };

  typename Decoder<T>::Trace trace;
  const auto z = dec.forward(in.fused, skips, &trace);
  const auto p = softmax_pixelwise(z);
  for (auto* prm : dec.parameters()) prm->zero_grad();
  const auto dfused = dec.backward(softmax_backward(p, seg_loss_grad_probs(p, gt, w)), trace);

  // Norm-wise relative error per parameter group, over every entry.
  auto check = [&](std::vector<T>& values, const std::vector<double>& analytic, const std::function<double()>& f,
                   const std::string& what) {
    std::vector<double> numeric;
    for (std::size_t i = 0; i < values.size(); ++i) numeric.push_back(testing::central_difference(values, i, h, f));
    EXPECT_LT(testing::vector_rel_error(analytic, numeric), tol) << what;
  };
  for (auto* prm : dec.parameters()) check(prm->value, {prm->grad.begin(), prm->grad.end()}, loss, prm->name);

  auto fused = in.fused;
  std::vector<T> v(fused.grid.values().begin(), fused.grid.values().end());
  auto loss_fused = [&] {
    std::copy(v.begin(), v.end(), fused.grid.data());
    return seg_loss(softmax_pixelwise(dec.forward(fused, skips)), gt, w);
  };
  check(v, {dfused.values().begin(), dfused.values().end()}, loss_fused, "fused input");
}

TEST(DecoderGradient, MatchesFiniteDifferencesDouble) { check_gradients<double>(1e-6, 1e-5); }

template <typename T>
Tensor<T> cast(const Tensor<float>& t) {
  Tensor<T> out(t.channels(), t.height(), t.width());
  std::copy(t.values().begin(), t.values().end(), out.data());
  return out;
}

// Float backprop against the double implementation verified above, on identical weights and inputs.
TEST(DecoderGradient, FloatAgreesWithDouble) {
  Rng rng(8);
  auto c = config_for(16, 2, 2, 1, 4);
  c.fused_dim = 8;
  c.min_channels = 4;
  Decoder<float> df(c);
  Decoder<double> dd(c);
  df.init(rng);
  auto pf = df.parameters();
  auto pd = dd.parameters();
  ASSERT_EQ(pf.size(), pd.size());
  for (std::size_t i = 0; i < pf.size(); ++i) std::copy(pf[i]->value.begin(), pf[i]->value.end(), pd[i]->value.begin());
  const auto in = random_inputs<float>(rng, c);
  BasicFeatureMap<double> fused_d{cast<double>(in.fused.grid), -1};
  std::vector<BasicFeatureMap<double>> taps_d;
  for (const auto& t : in.taps) taps_d.push_back({cast<double>(t.grid), t.depth_tag});
  const Mask gt = testing::random_mask(rng, c.image_side, c.image_side, 2);
  const LossWeights w;

  auto run = [&](auto& dec, const auto& fused, const auto& taps, const auto& image) {
    using D = std::decay_t<decltype(dec)>;
    typename D::Trace trace;
    const auto z = dec.forward(fused, dec.prepare_skips(taps, image), &trace);
    const auto p = softmax_pixelwise(z);
    for (auto* prm : dec.parameters()) prm->zero_grad();
    return dec.backward(softmax_backward(p, seg_loss_grad_probs(p, gt, w)), trace);
  };
  const auto gf = run(df, in.fused, in.taps, in.image);
  const auto gd = run(dd, fused_d, taps_d, cast<double>(in.image));
  for (std::size_t i = 0; i < pf.size(); ++i) {
    EXPECT_LT(testing::vector_rel_error({pf[i]->grad.begin(), pf[i]->grad.end()}, {pd[i]->grad.begin(), pd[i]->grad.end()}),
              1e-3)
        << pf[i]->name;
  }
  EXPECT_LT(testing::vector_rel_error({gf.values().begin(), gf.values().end()}, {gd.values().begin(), gd.values().end()}),
            1e-3);
}

}  // namespace
}  // namespace cliprl
