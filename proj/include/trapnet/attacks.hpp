#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>

#include "trapnet/data.hpp"
#include "trapnet/nn.hpp"

namespace trapnet {

enum class StepRule {
  sign,          // delta += eta * epsilon * sign(g)
  raw_gradient,  // delta += eta * g
};

enum class OrthoMode {
  rejection,      // g_x - g_d (g_d . g_x) / |g_d|^2
  paper_literal,  // g_x - g_d (g_d . g_x) / (|g_d| |g_x|)
  off,
};

std::string_view to_string(StepRule rule);
std::string_view to_string(OrthoMode mode);
/// Throw ConfigError on unknown names.
StepRule parse_step_rule(std::string_view name);
OrthoMode parse_ortho_mode(std::string_view name);

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double eta = 0.1;
  double lambda_weight = 8.0;
  std::size_t iterations = 100;
  StepRule step_rule = StepRule::sign;
  OrthoMode ortho_mode = OrthoMode::rejection;
  /// Uniform start inside the epsilon box, drawn from `seed`.
  bool random_start = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AttackResult {
  Tensor2D x_adv;
  double delta_linf = 0.0;
  bool misclassified = false;
  std::size_t label = 0;  // the true label the attack moved away from
  /// Cosine similarity against the signature the attack was steered by;
  /// empty for attacks that do not use one.
  std::optional<double> detection_score;
  std::size_t iterations_used = 0;
  /// Steps where h(x + delta) was zero, so g_d was replaced by zero.
  std::size_t degenerate_steps = 0;
};

/// delta clamped to [-epsilon, epsilon] and so that x + delta stays in [0, 1].
Tensor2D project_linf(const Tensor2D& x, const Tensor2D& delta, double epsilon);

/// The per-iteration displacement for a gradient under cfg.step_rule.
Tensor2D step_direction(const Tensor2D& g, const AttackConfig& cfg);

/// Untargeted PGD ascending L_xe(f(x + delta), y).
AttackResult pgd_xent(const ModelParams& params, const Tensor2D& x, std::size_t y,
                      const AttackConfig& cfg);

/// Projected ascent on L_xe(f(x + delta), y) - lambda * sim(h(x + delta), phi).
AttackResult joint_attack(const ModelParams& params, const Tensor2D& phi, const Tensor2D& x,
                          std::size_t y, const AttackConfig& cfg);

/// Removes from g_x its component along g_d according to `mode`.
/// Throws DegenerateError when g_d is zero and mode is not off.
Tensor2D orthogonalize(const Tensor2D& g_x, const Tensor2D& g_d, OrthoMode mode);

/// While f(x + delta) != y, descend the detection similarity; otherwise ascend
/// cross-entropy along orthogonalize(g_x, g_d). Returns the misclassified
/// iterate with the lowest similarity to phi, or the final iterate if no
/// iterate was misclassified.
AttackResult alternating_attack(const ModelParams& params, const Tensor2D& phi,
                                const Tensor2D& x, std::size_t y, const AttackConfig& cfg);

/// Observer for the cross-entropy branch of alternating_attack: receives the
/// raw g_d and the applied (orthogonalized) direction before step_rule.
using CrossEntropyStepObserver =
    std::function<void(const Tensor2D& g_d, const Tensor2D& direction)>;

AttackResult alternating_attack(const ModelParams& params, const Tensor2D& phi,
                                const Tensor2D& x, std::size_t y, const AttackConfig& cfg,
                                const CrossEntropyStepObserver& observer);

using AttackProcedure =
    std::function<AttackResult(const Tensor2D& x, std::size_t y, std::size_t index)>;

/// Mean of h(attack(x).x_adv) over `benign`: an estimate of the signature
/// built without reading it. Throws DegenerateError if no attack moved its
/// input or the mean is zero.
Tensor2D estimate_signature(const ModelParams& params, const Dataset& benign,
                            const AttackProcedure& attack);

/// As above; with require_movement = false an attack that leaves every input
/// unchanged is accepted (the estimate is then the mean benign hidden vector).
Tensor2D estimate_signature(const ModelParams& params, const Dataset& benign,
                            const AttackProcedure& attack, bool require_movement);

struct PairResult {
  AttackResult first;   // alternating attack against phi_ref
  AttackResult second;  // alternating attack against h(first.x_adv)
  bool chose_second = false;
  /// |cos(h(first), h(second))|; 0 when either hidden vector is zero.
  double pair_cosine = 0.0;

  const AttackResult& chosen() const { return chose_second ? second : first; }
};

/// Two adversarial examples with near-orthogonal hidden vectors, one of which
/// is returned by a fair coin seeded with cfg.seed.
PairResult orthogonal_pair_attack(const ModelParams& params, const Tensor2D& phi_ref,
                                  const Tensor2D& x, std::size_t y, const AttackConfig& cfg);

}  // namespace trapnet
