#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "trapnet/attacks.hpp"
#include "trapnet/data.hpp"
#include "trapnet/defense.hpp"
#include "trapnet/json_io.hpp"
#include "trapnet/nn.hpp"

namespace trapnet {

inline constexpr std::array<std::string_view, 6> kAttackNames = {
    "pgd", "joint", "alternating", "alternating-ortho", "no-signature", "ortho-pair"};

bool is_attack_name(std::string_view name);

/// Attacks that model an adversary without access to the defender's signature.
bool is_signature_free(std::string_view name);

struct TrapdoorConfig {
  std::size_t target_class = 0;
  std::size_t patch_side = 12;
  double amplitude = 0.1;
};

struct DetectorConfig {
  double fpr_target = 0.1;
  /// FPR levels at which every report lists the TPR.
  std::vector<double> report_fprs = {0.05, 0.1};
};

/// Which benign scores the ROC of an attack is measured against.
enum class BenignPopulation {
  attacked,  // the clean versions of the inputs that were attacked
  all,       // every benign test input
};

std::string_view to_string(BenignPopulation p);

struct EvalConfig {
  bool include_failed = false;
  BenignPopulation benign_population = BenignPopulation::attacked;
  /// Attack at most this many eligible test inputs; 0 means all of them.
  std::size_t max_inputs = 0;
};

/// Settings of one attack after merging [attack] with [attacks.<name>].
struct AttackSpec {
  std::string name;
  AttackConfig config;
  /// no-signature and ortho-pair: benign training samples used to build the
  /// signature estimate.
  std::size_t estimate_samples = 200;
  /// Path given by a `signature` key in the attack's table, if any.
  std::optional<std::string> signature_ref;
};

/// Everything a run depends on. Stage seeds are derived from master_seed.
struct RunConfig {
  std::uint64_t master_seed = 1;

  GenConfig data;
  std::optional<std::string> idx_images;
  std::optional<std::string> idx_labels;
  double train_fraction = 0.5;
  double calibration_fraction = 0.125;

  TrapdoorConfig trapdoor;
  std::vector<std::size_t> hidden_dims = {64};
  TrainConfig train;
  DetectorConfig detector;
  EvalConfig eval;
  AttackConfig attack;
  std::map<std::string, AttackSpec> attacks;

  std::string out_dir = "out";

  /// Seed for a named stage, e.g. "data", "split", "trapdoor", "train".
  std::uint64_t stage_seed(std::string_view stage) const;

  /// The resolved settings for one attack name. Throws ConfigError if unknown.
  const AttackSpec& attack_spec(std::string_view name) const;

  /// Architecture for the given data shape.
  Architecture architecture(std::size_t input_dim, std::size_t num_classes) const;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Parses TOML text. Unknown sections and keys are errors; `source` names
/// the input in messages. Throws ConfigError.
RunConfig parse_config(std::string_view toml_text, const std::string& source = "<config>");

/// Throws ConfigError (naming the path) if the file cannot be read or parsed.
RunConfig load_config(const std::filesystem::path& path);

/// Full snapshot of the resolved configuration, derived seeds included.
Json config_to_json(const RunConfig& cfg);

}  // namespace trapnet
