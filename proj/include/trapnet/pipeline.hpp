#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "trapnet/config.hpp"
#include "trapnet/eval.hpp"

namespace trapnet {

/// Artifact locations under a run's output directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path data_stem(const std::string& split) const { return root / "data" / split; }
  std::filesystem::path config_snapshot() const { return root / "config.json"; }
  std::filesystem::path trapdoor() const { return root / "trapdoor.json"; }
  std::filesystem::path model() const { return root / "model.json"; }
  std::filesystem::path train_metrics() const { return root / "train_metrics.json"; }
  std::filesystem::path signature() const { return root / "signature.json"; }
  std::filesystem::path eval_set() const { return root / "eval_set.json"; }
  std::filesystem::path attack_results(const std::string& name) const {
    return root / "attacks" / (name + ".jsonl");
  }
  std::filesystem::path phi_estimate() const { return root / "attacks" / "phi_estimate.json"; }
  std::filesystem::path report() const { return root / "report.json"; }
  std::filesystem::path timings() const { return root / "timings.json"; }
};

/// The output directory: `out_override` if non-empty, else cfg.out_dir.
RunPaths run_paths(const RunConfig& cfg, const std::filesystem::path& out_override = {});

// Pipeline stages. Each one reads its inputs from, and writes its outputs to,
// the run directory, so any stage can be rerun on its own. Failures surface
// as the typed errors in error.hpp.

void cmd_gen_data(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);

/// Trains, computes phi on the training split, calibrates tau on the
/// calibration split and selects the evaluation inputs.
void cmd_train(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);

/// Runs one attack over the evaluation inputs. The signature-free attacks
/// load only the checkpoint and data; configuring a signature for them
/// raises IsolationError.
void cmd_attack(const RunConfig& cfg, const RunPaths& paths, const std::string& name,
                std::ostream& log);

/// Scores every available results file (or only `names`, if non-empty)
/// against the defender's signature and writes the report.
ExperimentReport cmd_evaluate(const RunConfig& cfg, const RunPaths& paths,
                              const std::vector<std::string>& names, std::ostream& log);

/// gen-data, train, all six attacks, evaluate; prints the summary table.
ExperimentReport cmd_full_run(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);

void print_summary(const ExperimentReport& report, std::ostream& out);

}  // namespace trapnet
