#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <set>

#include "trapnet/error.hpp"
#include "trapnet/json_io.hpp"
#include "trapnet/parallel.hpp"
#include "trapnet/rng.hpp"
#include "trapnet/tensor.hpp"

using namespace trapnet;

TEST(Tensor, ConstructionAndIndexing) {
  Tensor2D t(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t(1, 0), 4.0);
  EXPECT_EQ(t[5], 6.0);
  EXPECT_EQ(t.shape_string(), "(2x3)");
  EXPECT_THROW(Tensor2D(2, 2, std::vector<double>{1.0}), ShapeError);
  EXPECT_TRUE(t.all_finite());
  t[0] = NAN;
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, Norms) {
  const std::vector<double> a{3.0, -4.0};
  EXPECT_DOUBLE_EQ(l2_norm(a), 5.0);
  EXPECT_DOUBLE_EQ(linf_norm(a), 4.0);
  EXPECT_DOUBLE_EQ(dot(a, a), 25.0);
}

TEST(Tensor, CosineExamples) {
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 1}),
              1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{2, 0}, std::vector<double>{-3, 0}), -1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{0, 5}, std::vector<double>{7, 0}), 0.0);
  EXPECT_THROW(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}),
               DegenerateError);
}

TEST(Tensor, CosineIsScaleInvariantAndBounded) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(5), b(5);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const double c = cosine_similarity(a, b);
    EXPECT_LE(std::abs(c), 1.0);
    std::vector<double> scaled = a;
    const double s = rng.uniform(0.01, 100.0);
    for (auto& v : scaled) v *= s;
    EXPECT_NEAR(cosine_similarity(scaled, b), c, 1e-12);
  }
}

TEST(Rng, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Rng, DeriveSeedIsDeterministicAndNameSensitive) {
  EXPECT_EQ(derive_seed(1, "train"), derive_seed(1, "train"));
  EXPECT_NE(derive_seed(1, "train"), derive_seed(1, "data"));
  EXPECT_NE(derive_seed(1, "train"), derive_seed(2, "train"));
}

TEST(Rng, SameSeedSameStream) {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_EQ(a.uniform(), b.uniform());
  EXPECT_EQ(a.normal(), b.normal());
}

TEST(Rng, DistributionsStayInRange) {
  Rng rng(7);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(12);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 50u);
}

TEST(Json, CanonicalFormIsSortedWithFullPrecision) {
  Json j = {{"b", 0.1}, {"a", {1, 2}}, {"c", "x"}};
  const std::string text = to_canonical_json(j);
  EXPECT_LT(text.find("\"a\""), text.find("\"b\""));
  EXPECT_NE(text.find("0.10000000000000001"), std::string::npos);
  EXPECT_EQ(Json::parse(text), j);
  EXPECT_EQ(to_canonical_json_line(Json{{"z", 1}, {"y", 2.5}}), "{\"y\":2.5,\"z\":1}");
}

TEST(Json, DoublesRoundTripBitwise) {
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
    const Json back = Json::parse(to_canonical_json_line(Json{{"v", v}}));
    EXPECT_EQ(back["v"].get<double>(), v);
  }
}

TEST(Json, FileErrors) {
  namespace fs = std::filesystem;
  const fs::path d = fs::temp_directory_path() / "trapnet_test_json";
  fs::remove_all(d);
  fs::create_directories(d);
  EXPECT_THROW(read_json_file(d / "missing.json"), IoError);
  write_text_file(d / "bad.json", "{\"a\": ");
  EXPECT_THROW(read_json_file(d / "bad.json"), FormatError);
  write_text_file(d / "ok.json", "{\"a\": 1}");
  EXPECT_EQ(read_json_file(d / "ok.json")["a"], 1);
}

TEST(Parallel, CoversEveryIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(97);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw ConfigError("boom");
                            }),
               ConfigError);
}
