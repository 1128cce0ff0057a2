#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trapnet/attacks.hpp"
#include "trapnet/json_io.hpp"

namespace trapnet {

/// Adversarial examples are the positive class and higher scores are more
/// adversarial throughout.

/// P(adv > benign) + 0.5 P(adv == benign), by ranking. Throws ConfigError on
/// empty input.
double auc(std::span<const double> adv_scores, std::span<const double> benign_scores);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;

  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

/// Sweep of the strict `score > tau` rule over every distinct score, from
/// (0,0) to (1,1). Tied adversarial/benign scores produce a diagonal segment.
std::vector<RocPoint> roc_curve(std::span<const double> adv_scores,
                                std::span<const double> benign_scores);

double trapezoid_area(std::span<const RocPoint> points);

/// TPR at the threshold calibrate_threshold(benign_scores, fpr_target).
double tpr_at_fpr(std::span<const double> adv_scores, std::span<const double> benign_scores,
                  double fpr_target);

double attack_success_rate(std::span<const AttackResult> results);

struct RocReport {
  std::vector<double> adv_scores;
  std::vector<double> benign_scores;
  double auc = 0.0;
  std::vector<RocPoint> roc_points;
  std::map<double, double> tpr_at;  // fpr target -> tpr
};

RocReport make_roc_report(std::vector<double> adv_scores, std::vector<double> benign_scores,
                          std::span<const double> fpr_targets);

struct AttackSummary {
  std::string name;
  std::size_t attempted = 0;
  std::size_t successful = 0;
  double success_rate = 0.0;
  double mean_linf = 0.0;
  double max_linf = 0.0;
  /// Whether failed attacks contribute to adv_scores.
  bool include_failed = false;
  /// Detection rate at the defender's calibrated tau.
  double detected_at_tau = 0.0;
  RocReport roc;
};

struct ExperimentReport {
  Json config;   // full run configuration snapshot, seeds included
  Json model;    // checkpoint hash, clean accuracy, trigger success, tau
  std::vector<AttackSummary> attacks;
  Json extra = Json::object();  // additional deterministic measurements
};

Json to_json(const RocReport& roc);
Json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const Json& j);

/// Writes `path` (canonical JSON) and `<stem>_<attack>_roc.csv` per attack
/// next to it. Throws IoError.
void emit_report(const ExperimentReport& report, const std::filesystem::path& path);

std::filesystem::path roc_csv_path(const std::filesystem::path& report_path,
                                   const std::string& attack_name);

std::string roc_csv(std::span<const RocPoint> points);

}  // namespace trapnet
