#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "cliprl/dataset.hpp"
#include "cliprl/errors.hpp"
#include "cliprl/image_io.hpp"
#include "test_support.hpp"

namespace cliprl {
namespace {

using testing::TempDir;

DatasetConfig small_config(int n = 10, int side = 64, int k = 4, std::uint64_t seed = 0) {
  DatasetConfig c;
  c.num_samples = n;
  c.height = side;
  c.width = side;
  c.num_classes = k;
  c.seed = seed;
  return c;
}

TEST(Dataset, SameSeedAndIndexGiveIdenticalSamples) {
  const auto cfg = small_config(5, 64, 4, 7);
  const auto a = generate_scene(cfg, 0);
  const auto b = generate_scene(cfg, 0);
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(a.image.rgb, b.image.rgb);
  EXPECT_EQ(a.mask.labels, b.mask.labels);
}

TEST(Dataset, DifferentIndicesDiffer) {
  const auto cfg = small_config(5);
  EXPECT_NE(generate_scene(cfg, 0).mask.labels, generate_scene(cfg, 1).mask.labels);
  EXPECT_NE(generate_scene(cfg, 0).id, generate_scene(cfg, 1).id);
}

TEST(Dataset, TwoClassConfigOnlyUsesZeroAndOne) {
  const auto cfg = small_config(6, 64, 2);
  for (int i = 0; i < cfg.num_samples; ++i) {
    for (ClassId c : generate_scene(cfg, i).mask.labels) EXPECT_TRUE(c == 0 || c == 1);
  }
}

TEST(Dataset, SampleInvariantsHold) {
  for (int k : {2, 3, 4, 6}) {
    const auto cfg = small_config(8, 32, k, 3);
    for (int i = 0; i < cfg.num_samples; ++i) {
      const auto s = generate_scene(cfg, i);
      ASSERT_EQ(s.image.height, s.mask.height);
      ASSERT_EQ(s.image.width, s.mask.width);
      for (float v : s.image.rgb) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
      }
      std::size_t background = 0;
      for (ClassId c : s.mask.labels) {
        ASSERT_GE(c, 0);
        ASSERT_LT(c, k);
        background += c == 0;
      }
      EXPECT_GT(background, 0u);
    }
  }
}

TEST(Dataset, DefaultScenesContainEveryBuiltInClass) {
  const auto cfg = small_config(20);
  for (int i = 0; i < cfg.num_samples; ++i) {
    const auto s = generate_scene(cfg, i);
    std::vector<std::size_t> brute(4, 0);
    for (ClassId c : s.mask.labels) ++brute[c];
    EXPECT_EQ(class_histogram(s.mask, 4), brute);
    for (int c = 0; c < 4; ++c) EXPECT_GT(brute[c], 0u) << "class " << c << " missing in sample " << i;
  }
}

TEST(Dataset, ThreadIsThin) {
  // A 1 px curve has almost no pixels whose four neighbours are all thread.
  const auto cfg = small_config(20);
  std::size_t interior = 0, total = 0;
  for (int i = 0; i < cfg.num_samples; ++i) {
    const auto m = generate_scene(cfg, i).mask;
    for (int y = 1; y + 1 < m.height; ++y)
      for (int x = 1; x + 1 < m.width; ++x) {
        if (m.at(y, x) != 3) continue;
        ++total;
        interior += m.at(y - 1, x) == 3 && m.at(y + 1, x) == 3 && m.at(y, x - 1) == 3 && m.at(y, x + 1) == 3;
      }
  }
  ASSERT_GT(total, 0u);
  EXPECT_LT(double(interior) / total, 0.05) << interior << " of " << total;
}

TEST(Dataset, InvalidConfigsAreRejected) {
  auto c = small_config();
  c.height = c.width = 48;
  EXPECT_THROW(generate_scene(c, 0), ConfigError);
  c = small_config();
  c.width = 32;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(generate_scene(small_config(3), 3), ArgumentError);
}

TEST(Dataset, SplitTwentyPercentOfTen) {
  const auto data = generate_dataset(small_config(10, 16));
  const auto split = split_dataset(data, 0.2, 1);
  EXPECT_EQ(split.val.size(), 2u);
  EXPECT_EQ(split.train.size(), 8u);
}

TEST(Dataset, SplitIsDeterministic) {
  const auto data = generate_dataset(small_config(5, 16));
  const auto a = split_dataset(data, 0.2, 9);
  const auto b = split_dataset(data, 0.2, 9);
  ASSERT_EQ(a.val.size(), b.val.size());
  for (std::size_t i = 0; i < a.val.size(); ++i) EXPECT_EQ(a.val[i].id, b.val[i].id);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].id, b.train[i].id);
}

TEST(Dataset, SplitIsAPartition) {
  const auto data = generate_dataset(small_config(100, 16));
  for (double frac : {0.2, 0.05, 0.5, 0.95}) {
    const auto split = split_dataset(data, frac, 4);
    std::multiset<std::string> ids;
    for (const auto& s : split.train) ids.insert(s.id);
    for (const auto& s : split.val) ids.insert(s.id);
    ASSERT_EQ(ids.size(), data.size());
    for (const auto& s : data) EXPECT_EQ(ids.count(s.id), 1u);
    EXPECT_EQ(split.val.size(), static_cast<std::size_t>(std::lround(frac * 100)));
  }
}

TEST(Dataset, SplitRejectsBadInput) {
  EXPECT_THROW(split_dataset({}, 0.2, 0), ArgumentError);
  const auto data = generate_dataset(small_config(4, 16));
  EXPECT_THROW(split_dataset(data, 0.0, 0), ArgumentError);
  EXPECT_THROW(split_dataset(data, 1.0, 0), ArgumentError);
}

TEST(ImageIo, MaskRoundTripIsExact) {
  TempDir dir("mask");
  const auto s = generate_scene(small_config(1), 0);
  save_mask(s.mask, dir.path() / "m.png");
  EXPECT_EQ(load_mask(dir.path() / "m.png").labels, s.mask.labels);

  Mask all(16, 16);
  for (int i = 0; i < 256; ++i) all.labels[i] = i;
  save_mask(all, dir.path() / "all.png");
  EXPECT_EQ(load_mask(dir.path() / "all.png").labels, all.labels);
}

TEST(ImageIo, ZeroMaskDecodesToZeros) {
  TempDir dir("zmask");
  save_mask(Mask(4, 4), dir.path() / "z.png");
  const Mask m = load_mask(dir.path() / "z.png");
  ASSERT_EQ(m.labels.size(), 16u);
  for (ClassId c : m.labels) EXPECT_EQ(c, 0);
}

TEST(ImageIo, DecodedMaskValuesStayInClassRange) {
  TempDir dir("kmask");
  const auto s = generate_scene(small_config(1), 0);
  save_mask(s.mask, dir.path() / "m.png");
  std::set<ClassId> values;
  for (ClassId c : load_mask(dir.path() / "m.png").labels) values.insert(c);
  for (ClassId c : values) EXPECT_TRUE(c >= 0 && c < 4);
}

TEST(ImageIo, MaskErrors) {
  TempDir dir("maskerr");
  Mask big(2, 2);
  big.labels[0] = 256;
  EXPECT_THROW(save_mask(big, dir.path() / "big.png"), FormatError);
  {
    std::ofstream(dir.path() / "junk.png") << "not a png";
  }
  try {
    load_mask(dir.path() / "junk.png");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.png"), std::string::npos);
  }
  EXPECT_THROW(load_mask(dir.path() / "missing.png"), IoError);
}

TEST(ImageIo, ImageRoundTripWithinQuantization) {
  TempDir dir("img");
  const auto s = generate_scene(small_config(1), 0);
  save_image(s.image, dir.path() / "i.png");
  const Image back = load_image(dir.path() / "i.png");
  ASSERT_EQ(back.rgb.size(), s.image.rgb.size());
  for (std::size_t i = 0; i < back.rgb.size(); ++i) EXPECT_LE(std::abs(back.rgb[i] - s.image.rgb[i]), 1.0f / 255.0f + 1e-6f);
}

TEST(ImageIo, UnsupportedFormatIsAnIoError) {
  TempDir dir("fmt");
  {
    std::ofstream(dir.path() / "x.bmp") << "BM....";
  }
  EXPECT_THROW(load_image(dir.path() / "x.bmp"), IoError);
}

TEST(ImageIo, ConstantImageStaysConstantWhenResized) {
  Image img(5, 7, 0.4f);
  for (auto [h, w] : {std::pair{3, 3}, std::pair{16, 9}, std::pair{64, 64}}) {
    const Image r = resize_image(img, h, w);
    ASSERT_EQ(r.height, h);
    for (float v : r.rgb) EXPECT_NEAR(v, 0.4f, 1e-6f);
  }
}

TEST(ImageIo, CheckerboardUpsampleAveragesNeighbours) {
  Image img(2, 2);
  const float board[2][2] = {{0.0f, 1.0f}, {1.0f, 0.0f}};
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = board[y][x];
  const Image r = resize_image(img, 4, 4);
  // Half-pixel centres: output pixel 1 samples source coordinate 0.25, pixel 2 samples 0.75.
  // (1,1): 0.75*0.25 + 0.25*0.75 = 0.375; (1,2): 0.75*0.75 + 0.25*0.25 = 0.625.
  EXPECT_NEAR(r.at(1, 1, 0), 0.375f, 1e-6f);
  EXPECT_NEAR(r.at(1, 2, 0), 0.625f, 1e-6f);
  EXPECT_NEAR(r.at(2, 1, 0), 0.625f, 1e-6f);
  EXPECT_NEAR(r.at(2, 2, 0), 0.375f, 1e-6f);
  // The four centre pixels average to the mean of the board.
  EXPECT_NEAR((r.at(1, 1, 0) + r.at(1, 2, 0) + r.at(2, 1, 0) + r.at(2, 2, 0)) / 4.0f, 0.5f, 1e-6f);
  // Corners clamp to the source corners.
  EXPECT_NEAR(r.at(0, 0, 1), 0.0f, 1e-6f);
  EXPECT_NEAR(r.at(0, 3, 2), 1.0f, 1e-6f);
}

TEST(ImageIo, ManifestRoundTrip) {
  TempDir dir("manifest");
  std::filesystem::create_directories(dir.path() / "images");
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 3; ++i) {
    const std::string id = "s" + std::to_string(i);
    entries.push_back({dir.path() / "images" / (id + ".png"), dir.path() / "images" / (id + "_m.png"), id});
  }
  write_manifest(dir.path() / "manifest.txt", entries);
  const auto back = read_manifest(dir.path() / "manifest.txt");
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].id, entries[i].id);
    EXPECT_TRUE(std::filesystem::equivalent(back[i].image_path.parent_path(), entries[i].image_path.parent_path()));
    EXPECT_EQ(back[i].mask_path.filename(), entries[i].mask_path.filename());
  }
}

}  // namespace
}  // namespace cliprl
