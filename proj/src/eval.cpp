#include "trapnet/eval.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <string>

#include "trapnet/defense.hpp"
#include "trapnet/error.hpp"

namespace trapnet {

namespace {

struct Scored {
  double score;
  bool adversarial;
};

std::vector<Scored> merged(std::span<const double> adv, std::span<const double> benign) {
  if (adv.empty() || benign.empty()) {
    throw ConfigError("ROC/AUC needs non-empty adversarial and benign score sets");
  }
  std::vector<Scored> all;
  all.reserve(adv.size() + benign.size());
  for (double s : adv) all.push_back({s, true});
  for (double s : benign) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Scored& a, const Scored& b) { return a.score < b.score; });
  return all;
}

std::string fpr_key(double fpr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", fpr);
  return buf;
}

Json points_json(std::span<const RocPoint> pts) {
  Json arr = Json::array();
  for (const auto& p : pts) arr.push_back(Json::array({p.fpr, p.tpr}));
  return arr;
}

}  // namespace

double auc(std::span<const double> adv_scores, std::span<const double> benign_scores) {
  const auto all = merged(adv_scores, benign_scores);
  // Twice the Mann-Whitney U statistic, kept integral so the result is exact.
  std::uint64_t twice_u = 0;
  std::uint64_t benign_below = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::uint64_t adv_group = 0;
    std::uint64_t benign_group = 0;
    while (j < all.size() && all[j].score == all[i].score) {
      (all[j].adversarial ? adv_group : benign_group) += 1;
      ++j;
    }
    twice_u += 2 * adv_group * benign_below + adv_group * benign_group;
    benign_below += benign_group;
    i = j;
  }
  const double pairs = 2.0 * static_cast<double>(adv_scores.size()) *
                       static_cast<double>(benign_scores.size());
  return static_cast<double>(twice_u) / pairs;
}

std::vector<RocPoint> roc_curve(std::span<const double> adv_scores,
                                std::span<const double> benign_scores) {
  const auto all = merged(adv_scores, benign_scores);
  const double n_adv = static_cast<double>(adv_scores.size());
  const double n_benign = static_cast<double>(benign_scores.size());
  std::vector<RocPoint> pts{{0.0, 0.0}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  // Descending sweep: after each group of equal scores, tau sits just below it.
  for (std::size_t j = all.size(); j > 0;) {
    std::size_t i = j;
    const double s = all[j - 1].score;
    while (i > 0 && all[i - 1].score == s) {
      (all[i - 1].adversarial ? tp : fp) += 1;
      --i;
    }
    pts.push_back({static_cast<double>(fp) / n_benign, static_cast<double>(tp) / n_adv});
    j = i;
  }
  return pts;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) * 0.5;
  }
  return area;
}

double tpr_at_fpr(std::span<const double> adv_scores, std::span<const double> benign_scores,
                  double fpr_target) {
  if (adv_scores.empty()) throw ConfigError("tpr_at_fpr: no adversarial scores");
  const double tau = calibrate_threshold(benign_scores, fpr_target);
  const auto hits = std::count_if(adv_scores.begin(), adv_scores.end(),
                                  [tau](double s) { return detect(s, tau); });
  return static_cast<double>(hits) / static_cast<double>(adv_scores.size());
}

double attack_success_rate(std::span<const AttackResult> results) {
  if (results.empty()) throw ConfigError("attack_success_rate: no results");
  const auto ok = std::count_if(results.begin(), results.end(),
                                [](const AttackResult& r) { return r.misclassified; });
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

RocReport make_roc_report(std::vector<double> adv_scores, std::vector<double> benign_scores,
                          std::span<const double> fpr_targets) {
  RocReport r;
  r.auc = auc(adv_scores, benign_scores);
  r.roc_points = roc_curve(adv_scores, benign_scores);
  for (double f : fpr_targets) r.tpr_at[f] = tpr_at_fpr(adv_scores, benign_scores, f);
  r.adv_scores = std::move(adv_scores);
  r.benign_scores = std::move(benign_scores);
  return r;
}

Json to_json(const RocReport& roc) {
  Json tpr = Json::object();
  for (const auto& [f, t] : roc.tpr_at) tpr[fpr_key(f)] = t;
  return {
      {"auc", roc.auc},
      {"roc_points", points_json(roc.roc_points)},
      {"tpr_at_fpr", tpr},
      {"adv_scores", roc.adv_scores},
      {"benign_scores", roc.benign_scores},
  };
}

Json to_json(const ExperimentReport& report) {
  Json attacks = Json::array();
  for (const auto& a : report.attacks) {
    attacks.push_back({
        {"name", a.name},
        {"attempted", a.attempted},
        {"successful", a.successful},
        {"success_rate", a.success_rate},
        {"mean_linf", a.mean_linf},
        {"max_linf", a.max_linf},
        {"include_failed", a.include_failed},
        {"detected_at_tau", a.detected_at_tau},
        {"roc", to_json(a.roc)},
    });
  }
  return {
      {"schema", "trapnet-report"},
      {"version", 1},
      {"config", report.config},
      {"model", report.model},
      {"attacks", attacks},
      {"extra", report.extra},
  };
}

ExperimentReport report_from_json(const Json& j) {
  try {
    if (j.at("schema").get<std::string>() != "trapnet-report") {
      throw ConfigError("not a trapnet report");
    }
    ExperimentReport r;
    r.config = j.at("config");
    r.model = j.at("model");
    r.extra = j.value("extra", Json::object());
    for (const auto& a : j.at("attacks")) {
      AttackSummary s;
      s.name = a.at("name").get<std::string>();
      s.attempted = a.at("attempted").get<std::size_t>();
      s.successful = a.at("successful").get<std::size_t>();
      s.success_rate = a.at("success_rate").get<double>();
      s.mean_linf = a.at("mean_linf").get<double>();
      s.max_linf = a.at("max_linf").get<double>();
      s.include_failed = a.at("include_failed").get<bool>();
      s.detected_at_tau = a.at("detected_at_tau").get<double>();
      const auto& roc = a.at("roc");
      s.roc.auc = roc.at("auc").get<double>();
      for (const auto& p : roc.at("roc_points")) {
        s.roc.roc_points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      }
      for (const auto& [k, v] : roc.at("tpr_at_fpr").items()) {
        s.roc.tpr_at[std::stod(k)] = v.get<double>();
      }
      s.roc.adv_scores = roc.at("adv_scores").get<std::vector<double>>();
      s.roc.benign_scores = roc.at("benign_scores").get<std::vector<double>>();
      r.attacks.push_back(std::move(s));
    }
    return r;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

std::filesystem::path roc_csv_path(const std::filesystem::path& report_path,
                                   const std::string& attack_name) {
  return report_path.parent_path() /
         (report_path.stem().string() + "_" + attack_name + "_roc.csv");
}

std::string roc_csv(std::span<const RocPoint> points) {
  std::string out = "fpr,tpr\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.fpr, p.tpr);
    out += buf;
  }
  return out;
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& path) {
  write_text_file(path, to_canonical_json(to_json(report)));
  for (const auto& a : report.attacks) {
    write_text_file(roc_csv_path(path, a.name), roc_csv(a.roc.roc_points));
  }
}

}  // namespace trapnet
