#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trapnet/attacks.hpp"
#include "trapnet/data.hpp"
#include "trapnet/defense.hpp"
#include "trapnet/json_io.hpp"
#include "trapnet/nn.hpp"

namespace trapnet {

// On-disk artifacts exchanged between pipeline stages. Every file is
// canonical JSON (or JSON lines), so identical inputs give identical bytes.
// Readers throw FormatError (with a byte offset) on malformed content and
// IoError when the file cannot be read.

Json tensor_to_json(const Tensor2D& t);
Tensor2D tensor_from_json(const Json& j);

Json model_to_json(const ModelParams& params);
ModelParams model_from_json(const Json& j);

struct LoadedModel {
  ModelParams params;
  std::string hash;  // SHA-256 of the checkpoint file bytes
};

/// Writes the checkpoint and returns its hash.
std::string save_model(const ModelParams& params, const std::filesystem::path& path);
LoadedModel load_model(const std::filesystem::path& path);

void save_trapdoor(const Trapdoor& t, const std::filesystem::path& path);
Trapdoor load_trapdoor(const std::filesystem::path& path);

Json signature_to_json(const Signature& s);
Signature signature_from_json(const Json& j);
void save_signature(const Signature& s, const std::filesystem::path& path);
Signature load_signature(const std::filesystem::path& path);

/// The attacker's estimate of the signature and what it was built from.
struct PhiEstimate {
  Tensor2D phi;
  std::string model_hash;
  std::string base_attack = "pgd";
  std::size_t samples = 0;
};

void save_phi_estimate(const PhiEstimate& e, const std::filesystem::path& path);
PhiEstimate load_phi_estimate(const std::filesystem::path& path);

/// Indices into the test split that the attacks run on.
struct EvalSet {
  std::vector<std::size_t> indices;
  std::string model_hash;
  std::string rule;  // how the indices were selected
};

void save_eval_set(const EvalSet& s, const std::filesystem::path& path);
EvalSet load_eval_set(const std::filesystem::path& path);

/// One line of an attack results file.
struct AttackRecord {
  std::size_t index = 0;  // position in the test split
  std::string attack;
  std::string model_hash;
  AttackConfig config;
  AttackResult result;
  /// ortho-pair only.
  std::optional<double> pair_cosine;
  std::optional<bool> chose_second;
};

Json record_to_json(const AttackRecord& r);
AttackRecord record_from_json(const Json& j);

void write_records(const std::vector<AttackRecord>& records, const std::filesystem::path& path);
std::vector<AttackRecord> read_records(const std::filesystem::path& path);

}  // namespace trapnet
