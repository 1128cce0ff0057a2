#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "trapnet/defense.hpp"
#include "trapnet/error.hpp"
#include "trapnet/eval.hpp"

using namespace trapnet;
using trapnet::testing::brute_force_auc;

namespace {

std::vector<double> coarse_scores(Rng& rng, std::size_t n, int levels) {
  std::vector<double> v(n);
  for (auto& s : v) s = static_cast<double>(rng.below(static_cast<std::size_t>(levels))) / levels;
  return v;
}

}  // namespace

TEST(Auc, Examples) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.4}, std::vector<double>{0.5, 0.1}), 0.75);
  EXPECT_EQ(auc(std::vector<double>{0.3, 0.3}, std::vector<double>{0.3}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{1.0}, std::vector<double>{0.0}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.0}, std::vector<double>{1.0}), 0.0);
  EXPECT_THROW(auc(std::vector<double>{}, std::vector<double>{1.0}), ConfigError);
}

TEST(Auc, EqualsBruteForceExactly) {
  Rng rng(60);
  for (int trial = 0; trial < 300; ++trial) {
    const auto adv = coarse_scores(rng, 1 + rng.below(80), 1 + static_cast<int>(rng.below(30)));
    const auto ben = coarse_scores(rng, 1 + rng.below(80), 1 + static_cast<int>(rng.below(30)));
    EXPECT_EQ(auc(adv, ben), brute_force_auc(adv, ben));
  }
}

TEST(Auc, SwappingClassesComplements) {
  Rng rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = coarse_scores(rng, 1 + rng.below(40), 7);
    const auto b = coarse_scores(rng, 1 + rng.below(40), 7);
    EXPECT_NEAR(auc(a, b) + auc(b, a), 1.0, 1e-12);
  }
}

TEST(Auc, InvariantUnderStrictlyIncreasingMaps) {
  Rng rng(62);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = coarse_scores(rng, 1 + rng.below(40), 9);
    auto b = coarse_scores(rng, 1 + rng.below(40), 9);
    const double before = auc(a, b);
    for (auto* v : {&a, &b}) {
      for (auto& s : *v) s = std::exp(3.0 * s) - 2.0;
    }
    EXPECT_EQ(auc(a, b), before);
  }
}

TEST(Roc, EndpointsMonotoneAndAreaMatchesAuc) {
  Rng rng(63);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = coarse_scores(rng, 1 + rng.below(60), 1 + static_cast<int>(rng.below(15)));
    const auto b = coarse_scores(rng, 1 + rng.below(60), 1 + static_cast<int>(rng.below(15)));
    const auto pts = roc_curve(a, b);
    EXPECT_EQ(pts.front(), (RocPoint{0.0, 0.0}));
    EXPECT_EQ(pts.back(), (RocPoint{1.0, 1.0}));
    for (std::size_t i = 1; i < pts.size(); ++i) {
      EXPECT_GE(pts[i].fpr, pts[i - 1].fpr);
      EXPECT_GE(pts[i].tpr, pts[i - 1].tpr);
    }
    EXPECT_NEAR(trapezoid_area(pts), auc(a, b), 1e-12);
  }
}

TEST(Roc, TiesGiveDiagonalSegment) {
  const auto pts = roc_curve(std::vector<double>{0.5}, std::vector<double>{0.5});
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[1], (RocPoint{1.0, 1.0}));
  EXPECT_DOUBLE_EQ(trapezoid_area(pts), 0.5);
}

TEST(TprAtFpr, Examples) {
  std::vector<double> benign{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  // tau = 9 at 10% FPR; only scores above 9 are detected.
  EXPECT_EQ(tpr_at_fpr(std::vector<double>{9.0, 9.5, 11.0, 0.0}, benign, 0.1), 0.5);
  EXPECT_EQ(tpr_at_fpr(std::vector<double>{20.0}, benign, 0.1), 1.0);
  EXPECT_EQ(tpr_at_fpr(std::vector<double>{1.0}, benign, 0.1), 0.0);
}

TEST(TprAtFpr, NonDecreasingInTarget) {
  Rng rng(64);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = coarse_scores(rng, 1 + rng.below(50), 20);
    const auto b = coarse_scores(rng, 1 + rng.below(50), 20);
    double prev = 0.0;
    for (double f = 0.02; f < 0.99; f += 0.07) {
      const double t = tpr_at_fpr(a, b, f);
      EXPECT_GE(t, prev);
      prev = t;
    }
  }
}

TEST(Success, CountsMisclassified) {
  std::vector<AttackResult> r(4);
  r[1].misclassified = true;
  r[3].misclassified = true;
  EXPECT_EQ(attack_success_rate(r), 0.5);
  EXPECT_THROW(attack_success_rate(std::vector<AttackResult>{}), ConfigError);
}

TEST(Report, RoundTripAndDeterministicBytes) {
  namespace fs = std::filesystem;
  ExperimentReport rep;
  rep.config = {{"seed", 1}};
  rep.model = {{"tau", 0.123456789012345678}};
  AttackSummary s;
  s.name = "pgd";
  s.attempted = 3;
  s.successful = 2;
  s.success_rate = 2.0 / 3.0;
  s.mean_linf = 0.031;
  s.max_linf = 0.0313;
  s.detected_at_tau = 1.0 / 3.0;
  const std::vector<double> fprs{0.05, 0.1};
  s.roc = make_roc_report({0.9, 0.8, 0.1}, {0.2, 0.3, 0.4, 0.95}, fprs);
  rep.attacks.push_back(s);

  const Json j = to_json(rep);
  const ExperimentReport back = report_from_json(Json::parse(to_canonical_json(j)));
  EXPECT_EQ(to_canonical_json(to_json(back)), to_canonical_json(j));
  EXPECT_EQ(back.attacks[0].roc.tpr_at.at(0.1), s.roc.tpr_at.at(0.1));

  const fs::path d = fs::temp_directory_path() / "trapnet_test_report";
  fs::remove_all(d);
  fs::create_directories(d);
  emit_report(rep, d / "report.json");
  const std::string first = read_text_file(d / "report.json");
  emit_report(rep, d / "report.json");
  EXPECT_EQ(read_text_file(d / "report.json"), first);

  const std::string csv = read_text_file(roc_csv_path(d / "report.json", "pgd"));
  EXPECT_EQ(csv.rfind("fpr,tpr\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')),
            s.roc.roc_points.size() + 1);
  EXPECT_THROW(report_from_json(Json{{"schema", "other"}}), ConfigError);
}

TEST(TprAtFpr, SeparationExamples) {
  const std::vector<double> high{0.8, 0.9, 0.95};
  const std::vector<double> low{0.1, 0.2, 0.3};
  EXPECT_EQ(tpr_at_fpr(high, low, 0.1), 1.0);
  EXPECT_EQ(tpr_at_fpr(low, high, 0.1), 0.0);
  EXPECT_EQ(tpr_at_fpr(std::vector<double>{0.9, 0.4}, std::vector<double>{0.5, 0.1}, 0.5), 1.0);
}

TEST(Success, ThreeOfFour) {
  std::vector<AttackResult> r(4);
  r[0].misclassified = r[1].misclassified = r[3].misclassified = true;
  EXPECT_EQ(attack_success_rate(r), 0.75);
  for (auto& x : r) x.misclassified = true;
  EXPECT_EQ(attack_success_rate(r), 1.0);
  for (auto& x : r) x.misclassified = false;
  EXPECT_EQ(attack_success_rate(r), 0.0);
}
