#include "trapnet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trapnet/defense.hpp"
#include "trapnet/error.hpp"
#include "trapnet/parallel.hpp"
#include "trapnet/rng.hpp"

namespace trapnet {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor2D add_clamped(const Tensor2D& x, const Tensor2D& delta) {
  Tensor2D out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i] + delta[i], 0.0, 1.0);
  return out;
}

Tensor2D initial_delta(const Tensor2D& x, const AttackConfig& cfg) {
  Tensor2D delta(x.rows(), x.cols());
  if (cfg.random_start) {
    Rng rng(cfg.seed);
    for (auto& d : delta.values()) d = rng.uniform(-cfg.epsilon, cfg.epsilon);
    delta = project_linf(x, delta, cfg.epsilon);
  }
  return delta;
}

// delta <- proj(delta + s * step(direction))
void take_step(const Tensor2D& x, Tensor2D& delta, const Tensor2D& direction, double s,
               const AttackConfig& cfg) {
  const Tensor2D step = step_direction(direction, cfg);
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += s * step[i];
  delta = project_linf(x, delta, cfg.epsilon);
}

AttackResult finish(const ModelParams& params, const Tensor2D& x, std::size_t y,
                    Tensor2D x_adv, const Tensor2D* phi, std::size_t iterations,
                    std::size_t degenerate) {
  AttackResult r;
  const auto trace = forward(params, x_adv);
  double linf = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) linf = std::max(linf, std::abs(x_adv[i] - x[i]));
  r.delta_linf = linf;
  r.misclassified = trace.predicted_class() != y;
  r.label = y;
  if (phi != nullptr) r.detection_score = detection_score_hidden(trace.hidden, *phi);
  r.x_adv = std::move(x_adv);
  r.iterations_used = iterations;
  r.degenerate_steps = degenerate;
  return r;
}

void check_attack_inputs(const ModelParams& params, const Tensor2D& x, std::size_t y,
                         const AttackConfig& cfg) {
  cfg.validate();
  if (x.size() != params.arch.input_dim) {
    throw ShapeError("attack input has size " + std::to_string(x.size()));
  }
  if (y >= params.arch.num_classes) throw IndexError("attack label out of range");
}

}  // namespace

std::string_view to_string(StepRule rule) {
  return rule == StepRule::sign ? "sign" : "raw_gradient";
}

std::string_view to_string(OrthoMode mode) {
  switch (mode) {
    case OrthoMode::rejection:
      return "rejection";
    case OrthoMode::paper_literal:
      return "paper_literal";
    default:
      return "off";
  }
}

StepRule parse_step_rule(std::string_view name) {
  if (name == "sign") return StepRule::sign;
  if (name == "raw_gradient") return StepRule::raw_gradient;
  throw ConfigError("unknown step_rule '" + std::string(name) + "' (expected sign|raw_gradient)");
}

OrthoMode parse_ortho_mode(std::string_view name) {
  if (name == "rejection") return OrthoMode::rejection;
  if (name == "paper_literal") return OrthoMode::paper_literal;
  if (name == "off") return OrthoMode::off;
  throw ConfigError("unknown ortho_mode '" + std::string(name) +
                    "' (expected rejection|paper_literal|off)");
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("attack config: epsilon must be > 0");
  if (!(eta > 0.0)) throw ConfigError("attack config: eta must be > 0");
  if (iterations == 0) throw ConfigError("attack config: iterations must be >= 1");
  if (!std::isfinite(lambda_weight)) throw ConfigError("attack config: lambda must be finite");
}

Tensor2D project_linf(const Tensor2D& x, const Tensor2D& delta, double epsilon) {
  require_same_size(x, delta, "project_linf");
  Tensor2D out = delta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = std::max(-epsilon, -x[i]);
    const double hi = std::min(epsilon, 1.0 - x[i]);
    out[i] = std::clamp(out[i], lo, hi);
  }
  return out;
}

Tensor2D step_direction(const Tensor2D& g, const AttackConfig& cfg) {
  Tensor2D out = g;
  if (cfg.step_rule == StepRule::sign) {
    const double size = cfg.eta * cfg.epsilon;
    for (auto& v : out.values()) v = size * sign(v);
  } else {
    for (auto& v : out.values()) v *= cfg.eta;
  }
  return out;
}

AttackResult pgd_xent(const ModelParams& params, const Tensor2D& x, std::size_t y,
                      const AttackConfig& cfg) {
  check_attack_inputs(params, x, y, cfg);
  Tensor2D delta = initial_delta(x, cfg);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Tensor2D g = grad_input_xent(params, add_clamped(x, delta), y);
    take_step(x, delta, g, 1.0, cfg);
  }
  return finish(params, x, y, add_clamped(x, delta), nullptr, cfg.iterations, 0);
}

AttackResult joint_attack(const ModelParams& params, const Tensor2D& phi, const Tensor2D& x,
                          std::size_t y, const AttackConfig& cfg) {
  check_attack_inputs(params, x, y, cfg);
  Tensor2D delta = initial_delta(x, cfg);
  std::size_t degenerate = 0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    auto grads = grad_input_both(params, add_clamped(x, delta), y, phi);
    Tensor2D g = std::move(grads.xent);
    if (grads.detection.empty()) {
      ++degenerate;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= cfg.lambda_weight * grads.detection[i];
    }
    take_step(x, delta, g, 1.0, cfg);
  }
  return finish(params, x, y, add_clamped(x, delta), &phi, cfg.iterations, degenerate);
}

Tensor2D orthogonalize(const Tensor2D& g_x, const Tensor2D& g_d, OrthoMode mode) {
  require_same_size(g_x, g_d, "orthogonalize");
  if (mode == OrthoMode::off) return g_x;
  const double nd = l2_norm(g_d.values());
  if (nd == 0.0) throw DegenerateError("orthogonalize: detection gradient is zero");
  const double proj = dot(g_d.values(), g_x.values());
  double coef = 0.0;
  if (mode == OrthoMode::rejection) {
    coef = proj / (nd * nd);
  } else {
    const double nx = l2_norm(g_x.values());
    coef = nx == 0.0 ? 0.0 : proj / (nd * nx);
  }
  Tensor2D out = g_x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= g_d[i] * coef;
  return out;
}

AttackResult alternating_attack(const ModelParams& params, const Tensor2D& phi,
                                const Tensor2D& x, std::size_t y, const AttackConfig& cfg) {
  return alternating_attack(params, phi, x, y, cfg, nullptr);
}

AttackResult alternating_attack(const ModelParams& params, const Tensor2D& phi,
                                const Tensor2D& x, std::size_t y, const AttackConfig& cfg,
                                const CrossEntropyStepObserver& observer) {
  check_attack_inputs(params, x, y, cfg);
  Tensor2D delta = initial_delta(x, cfg);
  std::size_t degenerate = 0;
  std::optional<Tensor2D> best;
  double best_score = 0.0;

  auto consider = [&](const ForwardTrace& trace, const Tensor2D& x_cur) {
    if (trace.predicted_class() == y) return;
    const double s = detection_score_hidden(trace.hidden, phi);
    if (!best || s < best_score) {
      best = x_cur;
      best_score = s;
    }
  };

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Tensor2D x_cur = add_clamped(x, delta);
    auto grads = grad_input_both(params, x_cur, y, phi);
    consider(grads.trace, x_cur);
    const bool degenerate_step =
        grads.detection.empty() || l2_norm(grads.detection.values()) == 0.0;
    if (degenerate_step) {
      ++degenerate;
      if (grads.detection.empty()) grads.detection = Tensor2D(x.rows(), x.cols());
    }
    if (grads.trace.predicted_class() != y) {
      take_step(x, delta, grads.detection, -1.0, cfg);
    } else {
      const OrthoMode mode = degenerate_step ? OrthoMode::off : cfg.ortho_mode;
      const Tensor2D direction = orthogonalize(grads.xent, grads.detection, mode);
      if (observer) observer(grads.detection, direction);
      take_step(x, delta, direction, 1.0, cfg);
    }
  }
  Tensor2D x_final = add_clamped(x, delta);
  consider(forward(params, x_final), x_final);
  return finish(params, x, y, best ? *best : x_final, &phi, cfg.iterations, degenerate);
}

Tensor2D estimate_signature(const ModelParams& params, const Dataset& benign,
                            const AttackProcedure& attack, bool require_movement) {
  if (benign.empty()) throw ConfigError("estimate_signature: empty dataset");
  std::vector<Tensor2D> hidden(benign.size());
  std::vector<char> moved(benign.size(), 0);
  parallel_for(benign.size(), default_thread_count(), [&](std::size_t i) {
    const AttackResult r = attack(benign.images[i], benign.labels[i], i);
    moved[i] = r.x_adv != benign.images[i] ? 1 : 0;
    hidden[i] = forward(params, r.x_adv).hidden;
  });
  if (require_movement && std::none_of(moved.begin(), moved.end(), [](char m) { return m != 0; })) {
    throw DegenerateError("estimate_signature: the attack did not move any input");
  }
  Tensor2D est(1, params.arch.hidden_dim());
  for (const auto& h : hidden) {
    for (std::size_t k = 0; k < est.size(); ++k) est[k] += h[k];
  }
  const double inv = 1.0 / static_cast<double>(benign.size());
  for (auto& v : est.values()) v *= inv;
  if (l2_norm(est.values()) == 0.0) {
    throw DegenerateError("estimate_signature: mean adversarial hidden vector is zero");
  }
  return est;
}

Tensor2D estimate_signature(const ModelParams& params, const Dataset& benign,
                            const AttackProcedure& attack) {
  return estimate_signature(params, benign, attack, true);
}

PairResult orthogonal_pair_attack(const ModelParams& params, const Tensor2D& phi_ref,
                                  const Tensor2D& x, std::size_t y, const AttackConfig& cfg) {
  PairResult out;
  out.first = alternating_attack(params, phi_ref, x, y, cfg);
  const Tensor2D h_first = forward(params, out.first.x_adv).hidden;
  if (l2_norm(h_first.values()) == 0.0) {
    // A zero hidden vector is already orthogonal to everything.
    out.second = out.first;
    out.pair_cosine = 0.0;
  } else {
    out.second = alternating_attack(params, h_first, x, y, cfg);
    const Tensor2D h_second = forward(params, out.second.x_adv).hidden;
    out.pair_cosine = l2_norm(h_second.values()) == 0.0
                          ? 0.0
                          : std::abs(cosine_similarity(h_first.values(), h_second.values()));
  }
  Rng coin(cfg.seed);
  out.chose_second = coin.coin();
  return out;
}

}  // namespace trapnet
