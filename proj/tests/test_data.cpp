#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "trapnet/data.hpp"
#include "trapnet/error.hpp"
#include "trapnet/json_io.hpp"
#include "trapnet/rng.hpp"

using namespace trapnet;
namespace fs = std::filesystem;

namespace {

GenConfig small_config(std::uint64_t seed = 5) {
  GenConfig g;
  g.num_classes = 3;
  g.image_side = 6;
  g.samples_per_class = 10;
  g.seed = seed;
  return g;
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("trapnet_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Synthetic, DeterministicAndInRange) {
  const Dataset a = gen_synthetic(small_config());
  const Dataset b = gen_synthetic(small_config());
  EXPECT_EQ(a, b);
  EXPECT_NE(a, gen_synthetic(small_config(6)));
  ASSERT_EQ(a.size(), 30u);
  EXPECT_EQ(a.input_dim(), 36u);
  EXPECT_NO_THROW(a.validate());
  for (const auto& im : a.images) {
    for (double p : im.values()) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
  }
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.labels[i], i / 10);
}

TEST(Synthetic, NoiseFreeSamplesEqualTemplates) {
  GenConfig g = small_config();
  g.noise_sigma = 0.0;
  const auto templates = synthetic_templates(g);
  const Dataset ds = gen_synthetic(g);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.images[i], templates[ds.labels[i]]);
}

TEST(Synthetic, RejectsBadConfig) {
  GenConfig g = small_config();
  g.image_side = 3;
  EXPECT_THROW(gen_synthetic(g), ConfigError);
  g = small_config();
  g.num_classes = 1;
  EXPECT_THROW(gen_synthetic(g), ConfigError);
  g = small_config();
  g.noise_sigma = -0.1;
  EXPECT_THROW(gen_synthetic(g), ConfigError);
  g = small_config();
  g.background = 0.9;
  g.contrast = 0.2;
  EXPECT_THROW(gen_synthetic(g), ConfigError);
}

TEST(Split, PartitionsDeterministically) {
  const Dataset ds = gen_synthetic(small_config());
  auto [a, b] = split(ds, 0.3, 9);
  EXPECT_EQ(a.size(), 9u);
  EXPECT_EQ(b.size(), 21u);
  auto [a2, b2] = split(ds, 0.3, 9);
  EXPECT_EQ(a, a2);
  EXPECT_EQ(b, b2);
  // Every sample lands in exactly one part (noise makes images distinct).
  std::multiset<std::vector<double>> all, parts;
  for (const auto& im : ds.images) all.insert(im.data());
  for (const auto& im : a.images) parts.insert(im.data());
  for (const auto& im : b.images) parts.insert(im.data());
  EXPECT_EQ(all, parts);
  EXPECT_THROW(split(ds, 1.0, 1), ConfigError);
  EXPECT_THROW(split(Dataset{}, 0.5, 1), ConfigError);
}

TEST(Idx, RoundTrip) {
  const fs::path d = temp_dir("idx");
  Dataset ds = gen_synthetic(small_config());
  // Quantize first so the byte encoding is lossless.
  for (auto& im : ds.images) {
    for (auto& p : im.values()) p = std::round(p * 255.0) / 255.0;
  }
  write_idx(ds, 6, 6, d / "img.idx", d / "lab.idx");
  const Dataset back = load_idx(d / "img.idx", d / "lab.idx");
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.num_classes, 3u);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t p = 0; p < ds.input_dim(); ++p) {
      EXPECT_NEAR(back.images[i][p], ds.images[i][p], 1e-15);
    }
  }
}

TEST(Idx, MalformedInputReportsOffset) {
  const std::vector<unsigned char> labels = {0, 0, 8, 1, 0, 0, 0, 1, 2};
  std::vector<unsigned char> images = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4};
  EXPECT_EQ(parse_idx(images, labels).size(), 1u);

  auto bad_magic = images;
  bad_magic[0] = 1;
  try {
    parse_idx(bad_magic, labels);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  auto wrong_type = images;
  wrong_type[2] = 0x0D;
  try {
    parse_idx(wrong_type, labels);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }

  auto truncated = images;
  truncated.pop_back();
  try {
    parse_idx(truncated, labels);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), truncated.size());
  }

  const std::vector<unsigned char> two_labels = {0, 0, 8, 1, 0, 0, 0, 2, 0, 1};
  try {
    parse_idx(images, two_labels);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
}

TEST(DatasetCache, RoundTripIsExact) {
  const fs::path d = temp_dir("cache");
  const Dataset ds = gen_synthetic(small_config());
  write_dataset_cache(ds, d / "train");
  EXPECT_EQ(read_dataset_cache(d / "train"), ds);
  const std::string first = read_text_file(d / "train.bin");
  write_dataset_cache(ds, d / "train");
  EXPECT_EQ(read_text_file(d / "train.bin"), first);
}

TEST(Trapdoor, ShapeAndDeterminism) {
  const Trapdoor t = make_trapdoor(8, 1, 42, 3, 0.5);
  EXPECT_EQ(t, make_trapdoor(8, 1, 42, 3, 0.5));
  double mask_sum = 0.0;
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      const double m = t.mask[r * 8 + c];
      EXPECT_EQ(m, (r >= 5 && c >= 5) ? 1.0 : 0.0);
      mask_sum += m;
      const double p = t.pattern[r * 8 + c];
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
      if (m == 0.0) EXPECT_EQ(p, 0.0);
    }
  }
  EXPECT_EQ(mask_sum, 9.0);
}

TEST(Trapdoor, FullPatchMasksEverything) {
  const Trapdoor t = make_trapdoor(5, 0, 1, 5, 1.0);
  for (double m : t.mask.values()) EXPECT_EQ(m, 1.0);
  // Amplitude 1 over the whole image replaces the input by the pattern.
  const Tensor2D x(1, 25, 0.37);
  EXPECT_EQ(apply_trapdoor(x, t), t.pattern);
}

TEST(Trapdoor, RejectsOversizedPatchOrBadAmplitude) {
  EXPECT_THROW(make_trapdoor(4, 0, 1, 5, 0.5), ConfigError);
  EXPECT_THROW(make_trapdoor(4, 0, 1, 2, 0.0), ConfigError);
  EXPECT_THROW(make_trapdoor(4, 0, 1, 2, 1.5), ConfigError);
}

TEST(Trapdoor, ApplyKeepsRangeAndOutsideUntouched) {
  Rng rng(8);
  const Trapdoor t = make_trapdoor(6, 0, 3, 3, 0.6);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor2D x(1, 36);
    for (auto& v : x.values()) v = rng.uniform();
    const Tensor2D y = apply_trapdoor(x, t);
    for (std::size_t i = 0; i < 36; ++i) {
      EXPECT_GE(y[i], 0.0);
      EXPECT_LE(y[i], 1.0);
      if (t.mask[i] == 0.0) {
        EXPECT_EQ(y[i], x[i]);
      } else {
        EXPECT_NEAR(y[i], 0.4 * x[i] + 0.6 * t.pattern[i], 1e-15);
      }
    }
  }
}

TEST(Trapdoor, IdempotentAtFullAmplitude) {
  Rng rng(9);
  const Trapdoor t = make_trapdoor(6, 0, 3, 4, 1.0);
  Tensor2D x(1, 36);
  for (auto& v : x.values()) v = rng.uniform();
  const Tensor2D once = apply_trapdoor(x, t);
  EXPECT_EQ(apply_trapdoor(once, t), once);
}

TEST(Idx, PixelBytesScaleToUnitRange) {
  // Two 2x2 images behind a big-endian IDX header.
  std::vector<unsigned char> images{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                    0, 255, 51, 0, 255, 255, 0, 102};
  std::vector<unsigned char> labels{0, 0, 8, 1, 0, 0, 0, 2, 1, 0};
  const Dataset ds = parse_idx(images, labels);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.input_dim(), 4u);
  EXPECT_EQ(ds.images[0][0], 0.0);
  EXPECT_EQ(ds.images[0][1], 1.0);
  EXPECT_DOUBLE_EQ(ds.images[0][2], 0.2);
  EXPECT_DOUBLE_EQ(ds.images[1][3], 0.4);
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{1, 0}));
}

TEST(Split, HalfOfTenIsFiveAndFive) {
  GenConfig g = small_config();
  g.num_classes = 2;
  g.samples_per_class = 5;
  const auto [train, test] = split(gen_synthetic(g), 0.5, 3);
  EXPECT_EQ(train.size(), 5u);
  EXPECT_EQ(test.size(), 5u);
}

TEST(Trapdoor, EmptyMaskIsIdentity) {
  Trapdoor t = make_trapdoor(6, 0, 3, 3, 0.7);
  t.mask = Tensor2D(1, 36);
  Rng rng(10);
  Tensor2D x(1, 36);
  for (auto& v : x.values()) v = rng.uniform();
  EXPECT_EQ(apply_trapdoor(x, t), x);
}
