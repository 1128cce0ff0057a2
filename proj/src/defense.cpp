#include "trapnet/defense.hpp"

#include <algorithm>
#include <cmath>

#include "trapnet/error.hpp"
#include "trapnet/parallel.hpp"
#include "trapnet/rng.hpp"

namespace trapnet {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train config: batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train config: lr must be > 0");
  if (!(poison_fraction > 0.0 && poison_fraction < 1.0)) {
    throw ConfigError("train config: poison_fraction must lie in (0, 1)");
  }
}

void Signature::validate() const {
  if (phi.empty() || l2_norm(phi.values()) == 0.0) {
    throw DegenerateError("signature phi is the zero vector");
  }
  if (!(tau >= -1.0 && tau <= 1.0)) throw ConfigError("signature tau must lie in [-1, 1]");
  if (!(fpr_target > 0.0 && fpr_target < 1.0)) {
    throw ConfigError("signature fpr_target must lie in (0, 1)");
  }
}

TrainMetrics evaluate_model(const ModelParams& params, const Dataset& ds,
                            const Trapdoor& trapdoor) {
  TrainMetrics m;
  if (ds.empty()) return m;
  std::size_t correct = 0;
  std::size_t triggered = 0;
  std::size_t eligible = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (predict(params, ds.images[i]) == ds.labels[i]) ++correct;
    if (ds.labels[i] != trapdoor.target_class) {
      ++eligible;
      if (predict(params, apply_trapdoor(ds.images[i], trapdoor)) == trapdoor.target_class) {
        ++triggered;
      }
    }
  }
  m.clean_accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  m.trigger_success =
      eligible == 0 ? 0.0 : static_cast<double>(triggered) / static_cast<double>(eligible);
  return m;
}

TrainResult train_trapdoored(const Dataset& train, const Trapdoor& trapdoor,
                             const TrainConfig& cfg, const Architecture& arch,
                             const Dataset& heldout) {
  cfg.validate();
  arch.validate();
  if (train.empty()) throw ConfigError("train_trapdoored: empty training set");
  if (trapdoor.mask.size() != arch.input_dim || train.input_dim() != arch.input_dim) {
    throw ShapeError("train_trapdoored: data/trapdoor size does not match input_dim " +
                     std::to_string(arch.input_dim));
  }
  if (trapdoor.target_class >= arch.num_classes) {
    throw ConfigError("train_trapdoored: trapdoor target class out of range");
  }
  if (train.num_classes > arch.num_classes) {
    throw ConfigError("train_trapdoored: dataset has more classes than the architecture");
  }

  ModelParams params = init_model(arch, derive_seed(cfg.seed, "init"));
  Rng rng(derive_seed(cfg.seed, "batches"));
  const std::size_t n = train.size();
  const auto n_poison = static_cast<std::size_t>(
      std::llround(cfg.poison_fraction * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::vector<Tensor2D> batch_x;
  std::vector<std::size_t> batch_y;
  double last_loss = 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fresh poison subset each epoch.
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<bool> poisoned(n, false);
    for (std::size_t i = 0; i < n_poison; ++i) poisoned[order[i]] = true;
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t idx = order[j];
        if (poisoned[idx]) {
          batch_x.push_back(apply_trapdoor(train.images[idx], trapdoor));
          batch_y.push_back(trapdoor.target_class);
        } else {
          batch_x.push_back(train.images[idx]);
          batch_y.push_back(train.labels[idx]);
        }
      }
      auto lg = grad_params(params, batch_x, batch_y);
      if (!std::isfinite(lg.loss)) throw TrainingError("training diverged: non-finite loss", epoch);
      try {
        apply_sgd(params, lg.grads, cfg.lr);
      } catch (const NumericError& e) {
        throw TrainingError(std::string("training diverged: ") + e.what(), epoch);
      }
      epoch_loss += lg.loss;
      ++batches;
    }
    last_loss = epoch_loss / static_cast<double>(batches);
  }

  TrainResult result{std::move(params), {}};
  result.metrics = evaluate_model(result.params, heldout, trapdoor);
  result.metrics.final_loss = last_loss;
  result.metrics.epochs_run = cfg.epochs;
  return result;
}

Tensor2D compute_signature(const ModelParams& params, const Dataset& benign,
                           const Trapdoor& trapdoor) {
  if (benign.empty()) throw ConfigError("compute_signature: empty dataset");
  std::vector<Tensor2D> hidden(benign.size());
  parallel_for(benign.size(), default_thread_count(), [&](std::size_t i) {
    hidden[i] = forward(params, apply_trapdoor(benign.images[i], trapdoor)).hidden;
  });
  Tensor2D phi(1, params.arch.hidden_dim());
  for (const auto& h : hidden) {
    for (std::size_t k = 0; k < phi.size(); ++k) phi[k] += h[k];
  }
  const double inv = 1.0 / static_cast<double>(benign.size());
  for (auto& v : phi.values()) v *= inv;
  if (l2_norm(phi.values()) == 0.0) {
    throw DegenerateError("compute_signature: mean trapdoored hidden vector is zero");
  }
  return phi;
}

double detection_score_hidden(const Tensor2D& hidden, const Tensor2D& phi) {
  require_same_size(hidden, phi, "detection_score");
  if (l2_norm(phi.values()) == 0.0) throw DegenerateError("detection_score: zero signature");
  if (l2_norm(hidden.values()) == 0.0) return -1.0;
  return cosine_similarity(hidden.values(), phi.values());
}

double detection_score(const ModelParams& params, const Tensor2D& phi, const Tensor2D& x) {
  return detection_score_hidden(forward(params, x).hidden, phi);
}

std::vector<double> detection_scores(const ModelParams& params, const Tensor2D& phi,
                                     std::span<const Tensor2D> inputs) {
  std::vector<double> scores(inputs.size());
  parallel_for(inputs.size(), default_thread_count(),
               [&](std::size_t i) { scores[i] = detection_score(params, phi, inputs[i]); });
  return scores;
}

double calibrate_threshold(std::span<const double> benign_scores, double fpr_target) {
  if (benign_scores.empty()) throw ConfigError("calibrate_threshold: no benign scores");
  if (!(fpr_target > 0.0 && fpr_target < 1.0)) {
    throw ConfigError("calibrate_threshold: fpr_target must lie in (0, 1)");
  }
  std::vector<double> sorted(benign_scores.begin(), benign_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  // floor(fpr * n) samples may exceed tau; the guard absorbs representation
  // error such as 0.1 * 100 = 10.000000000000002.
  auto allowed = static_cast<std::size_t>(std::floor(fpr_target * static_cast<double>(n) + 1e-9));
  allowed = std::min(allowed, n - 1);
  return sorted[n - allowed - 1];
}

}  // namespace trapnet
