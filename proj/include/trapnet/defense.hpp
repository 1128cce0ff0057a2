#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trapnet/data.hpp"
#include "trapnet/nn.hpp"

namespace trapnet {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double lr = 0.1;
  double poison_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainMetrics {
  double clean_accuracy = 0.0;
  /// Fraction of non-target-class inputs sent to the target class by the trigger.
  double trigger_success = 0.0;
  double final_loss = 0.0;
  std::size_t epochs_run = 0;
};

struct TrainResult {
  ModelParams params;
  TrainMetrics metrics;
};

/// Minibatch SGD on cross-entropy where, each epoch, a seeded
/// poison_fraction of the training samples is swapped for
/// (apply_trapdoor(x), target_class). Metrics are measured on `heldout`.
/// Throws TrainingError if the loss becomes non-finite.
TrainResult train_trapdoored(const Dataset& train, const Trapdoor& trapdoor,
                             const TrainConfig& cfg, const Architecture& arch,
                             const Dataset& heldout);

TrainMetrics evaluate_model(const ModelParams& params, const Dataset& ds,
                            const Trapdoor& trapdoor);

/// The defender's signature and its calibrated threshold.
struct Signature {
  Tensor2D phi;
  double tau = 0.0;
  double fpr_target = 0.1;
  std::size_t calibration_size = 0;
  std::string model_hash;
  std::string phi_source = "train";

  /// Throws DegenerateError for a zero phi and ConfigError for tau outside [-1, 1].
  void validate() const;
};

/// Mean of h(apply_trapdoor(x)) over `benign`; summation runs in sample order.
Tensor2D compute_signature(const ModelParams& params, const Dataset& benign,
                           const Trapdoor& trapdoor);

/// sim(h, phi); -1 when h is the zero vector. Throws DegenerateError for zero phi.
double detection_score_hidden(const Tensor2D& hidden, const Tensor2D& phi);

double detection_score(const ModelParams& params, const Tensor2D& phi, const Tensor2D& x);

std::vector<double> detection_scores(const ModelParams& params, const Tensor2D& phi,
                                     std::span<const Tensor2D> inputs);

/// The ceil((1 - fpr) * n)-th smallest score: the smallest order statistic
/// whose strict exceedance rate on `benign_scores` is at most fpr_target.
double calibrate_threshold(std::span<const double> benign_scores, double fpr_target);

/// Adversarial iff score > tau.
constexpr bool detect(double score, double tau) noexcept { return score > tau; }

}  // namespace trapnet
