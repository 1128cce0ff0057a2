#include "trapnet/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>

#include "trapnet/artifacts.hpp"
#include "trapnet/error.hpp"
#include "trapnet/parallel.hpp"
#include "trapnet/rng.hpp"

namespace trapnet {

namespace fs = std::filesystem;

namespace {

const char* kEvalRule = "test inputs classified correctly whose label is not the trapdoor target";

std::size_t image_side(std::size_t input_dim) {
  const auto side =
      static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(input_dim))));
  if (side * side != input_dim) {
    throw ConfigError("input dimension " + std::to_string(input_dim) + " is not a square image");
  }
  return side;
}

void require_same_model(const std::string& expected, const std::string& found,
                        const std::string& what) {
  if (expected != found) {
    throw HashMismatchError(what + " was derived from model " + found.substr(0, 12) +
                            ", but the checkpoint hash is " + expected.substr(0, 12));
  }
}

std::uint64_t input_seed(const AttackConfig& c, std::size_t index) {
  return derive_seed(c.seed, "input." + std::to_string(index));
}

Dataset attacker_samples(const RunPaths& paths, std::size_t n) {
  Dataset train = read_dataset_cache(paths.data_stem("train"));
  if (n < train.size()) {
    train.images.resize(n);
    train.labels.resize(n);
  }
  return train;
}

/// The attacker's signature estimate: mean hidden vector of PGD outputs on
/// benign training samples. Never touches the defender's signature.
PhiEstimate build_phi_estimate(const RunConfig& cfg, const RunPaths& paths,
                               const LoadedModel& model, std::size_t samples) {
  const Dataset benign = attacker_samples(paths, samples);
  const AttackConfig base = cfg.attack_spec("pgd").config;
  PhiEstimate est;
  est.phi = estimate_signature(model.params, benign,
                               [&](const Tensor2D& x, std::size_t y, std::size_t i) {
                                 AttackConfig c = base;
                                 c.seed = derive_seed(base.seed, "estimate." + std::to_string(i));
                                 return pgd_xent(model.params, x, y, c);
                               });
  est.model_hash = model.hash;
  est.base_attack = "pgd";
  est.samples = benign.size();
  return est;
}

PhiEstimate phi_estimate_for(const RunConfig& cfg, const RunPaths& paths, const LoadedModel& model,
                             std::size_t samples, std::ostream& log) {
  if (fs::exists(paths.phi_estimate())) {
    PhiEstimate e = load_phi_estimate(paths.phi_estimate());
    if (e.model_hash == model.hash && e.samples == samples) return e;
  }
  log << "estimating signature from " << samples << " PGD outputs\n";
  PhiEstimate e = build_phi_estimate(cfg, paths, model, samples);
  save_phi_estimate(e, paths.phi_estimate());
  return e;
}

Json metrics_json(const TrainMetrics& m, const std::string& hash) {
  return {
      {"format", "trapnet-train-metrics"},
      {"version", 1},
      {"clean_accuracy", m.clean_accuracy},
      {"trigger_success", m.trigger_success},
      {"final_loss", m.final_loss},
      {"epochs_run", m.epochs_run},
      {"model_hash", hash},
  };
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

RunPaths run_paths(const RunConfig& cfg, const fs::path& out_override) {
  return {out_override.empty() ? fs::path(cfg.out_dir) : out_override};
}

void cmd_gen_data(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  Dataset all;
  if (cfg.idx_images) {
    all = load_idx(*cfg.idx_images, *cfg.idx_labels);
    log << "loaded " << all.size() << " IDX samples\n";
  } else {
    all = gen_synthetic(cfg.data);
    log << "generated " << all.size() << " synthetic samples\n";
  }
  auto [train, rest] = split(all, cfg.train_fraction, cfg.stage_seed("split"));
  const double calib_share = cfg.calibration_fraction / (1.0 - cfg.train_fraction);
  auto [calibration, test] = split(rest, calib_share, cfg.stage_seed("split.calibration"));
  if (train.empty() || calibration.empty() || test.empty()) {
    throw ConfigError("data split leaves an empty train, calibration or test set");
  }
  write_dataset_cache(train, paths.data_stem("train"));
  write_dataset_cache(calibration, paths.data_stem("calibration"));
  write_dataset_cache(test, paths.data_stem("test"));
  write_text_file(paths.config_snapshot(), to_canonical_json(config_to_json(cfg)));
  log << "train " << train.size() << ", calibration " << calibration.size() << ", test "
      << test.size() << "\n";
}

void cmd_train(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Dataset train = read_dataset_cache(paths.data_stem("train"));
  const Dataset calibration = read_dataset_cache(paths.data_stem("calibration"));
  const Dataset test = read_dataset_cache(paths.data_stem("test"));
  const std::size_t side = image_side(train.input_dim());
  if (cfg.trapdoor.target_class >= train.num_classes) {
    throw ConfigError("[trapdoor] target_class exceeds the number of classes in the data");
  }

  const Trapdoor trapdoor = make_trapdoor(side, cfg.trapdoor.target_class,
                                          cfg.stage_seed("trapdoor"), cfg.trapdoor.patch_side,
                                          cfg.trapdoor.amplitude);
  const Architecture arch = cfg.architecture(train.input_dim(), train.num_classes);
  const TrainResult trained = train_trapdoored(train, trapdoor, cfg.train, arch, test);

  save_trapdoor(trapdoor, paths.trapdoor());
  const std::string hash = save_model(trained.params, paths.model());
  write_text_file(paths.train_metrics(), to_canonical_json(metrics_json(trained.metrics, hash)));

  Signature sig;
  sig.phi = compute_signature(trained.params, train, trapdoor);
  const auto calib_scores = detection_scores(trained.params, sig.phi, calibration.images);
  sig.tau = calibrate_threshold(calib_scores, cfg.detector.fpr_target);
  sig.fpr_target = cfg.detector.fpr_target;
  sig.calibration_size = calibration.size();
  sig.model_hash = hash;
  sig.phi_source = "train";
  save_signature(sig, paths.signature());

  EvalSet eval;
  eval.model_hash = hash;
  eval.rule = kEvalRule;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (cfg.eval.max_inputs != 0 && eval.indices.size() >= cfg.eval.max_inputs) break;
    if (test.labels[i] == trapdoor.target_class) continue;
    if (predict(trained.params, test.images[i]) != test.labels[i]) continue;
    eval.indices.push_back(i);
  }
  if (eval.indices.empty()) throw ConfigError("no test input is eligible for attack");
  save_eval_set(eval, paths.eval_set());

  log << std::fixed << std::setprecision(4) << "clean accuracy " << trained.metrics.clean_accuracy
      << "\ntrigger success " << trained.metrics.trigger_success << "\ntau " << sig.tau
      << " (fpr target " << sig.fpr_target << ", " << sig.calibration_size << " calibration inputs)"
      << "\neval inputs " << eval.indices.size() << "\n"
      << std::defaultfloat;
}

void cmd_attack(const RunConfig& cfg, const RunPaths& paths, const std::string& name,
                std::ostream& log) {
  const AttackSpec& spec = cfg.attack_spec(name);
  const bool signature_free = is_signature_free(name);
  if (signature_free && spec.signature_ref) {
    throw IsolationError("attack '" + name + "' is signature-free but its config references '" +
                         *spec.signature_ref + "'");
  }

  const LoadedModel model = load_model(paths.model());
  const Dataset test = read_dataset_cache(paths.data_stem("test"));
  const EvalSet eval = load_eval_set(paths.eval_set());
  require_same_model(model.hash, eval.model_hash, "eval_set.json");

  Tensor2D phi;
  if (name == "joint" || name == "alternating" || name == "alternating-ortho") {
    const Signature sig = load_signature(spec.signature_ref ? fs::path(*spec.signature_ref)
                                                            : paths.signature());
    require_same_model(model.hash, sig.model_hash, "signature");
    phi = sig.phi;
  } else if (signature_free) {
    phi = phi_estimate_for(cfg, paths, model, spec.estimate_samples, log).phi;
  }

  const ModelParams& params = model.params;
  std::vector<AttackRecord> records(eval.indices.size());
  parallel_for(records.size(), default_thread_count(), [&](std::size_t k) {
    const std::size_t index = eval.indices[k];
    if (index >= test.size()) throw FormatError("eval_set index out of range", 0);
    const Tensor2D& x = test.images[index];
    const std::size_t y = test.labels[index];
    AttackRecord& rec = records[k];
    rec.index = index;
    rec.attack = name;
    rec.model_hash = model.hash;
    rec.config = spec.config;
    rec.config.seed = input_seed(spec.config, index);
    const AttackConfig& c = rec.config;
    if (name == "pgd") {
      rec.result = pgd_xent(params, x, y, c);
    } else if (name == "joint") {
      rec.result = joint_attack(params, phi, x, y, c);
    } else if (name == "ortho-pair") {
      PairResult pr = orthogonal_pair_attack(params, phi, x, y, c);
      rec.result = pr.chosen();
      rec.pair_cosine = pr.pair_cosine;
      rec.chose_second = pr.chose_second;
    } else {
      rec.result = alternating_attack(params, phi, x, y, c);
    }
  });
  write_records(records, paths.attack_results(name));

  std::size_t ok = 0;
  for (const auto& r : records) ok += r.result.misclassified ? 1 : 0;
  log << name << ": " << ok << "/" << records.size() << " inputs misclassified\n";
}

ExperimentReport cmd_evaluate(const RunConfig& cfg, const RunPaths& paths,
                              const std::vector<std::string>& names, std::ostream& log) {
  const LoadedModel model = load_model(paths.model());
  const Signature sig = load_signature(paths.signature());
  require_same_model(model.hash, sig.model_hash, "signature");
  const EvalSet eval = load_eval_set(paths.eval_set());
  require_same_model(model.hash, eval.model_hash, "eval_set.json");
  const Dataset test = read_dataset_cache(paths.data_stem("test"));
  const Json metrics = read_json_file(paths.train_metrics());
  require_same_model(model.hash, metrics.value("model_hash", std::string()), "train_metrics.json");

  std::vector<std::string> selected = names;
  if (selected.empty()) {
    for (auto n : kAttackNames) {
      if (fs::exists(paths.attack_results(std::string(n)))) selected.emplace_back(n);
    }
  }

  std::vector<Tensor2D> eval_inputs;
  for (std::size_t i : eval.indices) eval_inputs.push_back(test.images.at(i));
  const auto benign_attacked = detection_scores(model.params, sig.phi, eval_inputs);
  const auto benign_all = detection_scores(model.params, sig.phi, test.images);
  const auto& benign = cfg.eval.benign_population == BenignPopulation::attacked ? benign_attacked
                                                                                 : benign_all;
  std::vector<double> fprs = cfg.detector.report_fprs;
  fprs.push_back(sig.fpr_target);

  ExperimentReport report;
  report.config = config_to_json(cfg);
  report.model = {
      {"model_hash", model.hash},
      {"clean_accuracy", metrics.at("clean_accuracy")},
      {"trigger_success", metrics.at("trigger_success")},
      {"tau", sig.tau},
      {"fpr_target", sig.fpr_target},
      {"calibration_size", sig.calibration_size},
      {"phi_source", sig.phi_source},
      {"eval_inputs", eval.indices.size()},
      {"eval_rule", eval.rule},
  };
  Json extra = Json::object();

  for (const auto& name : selected) {
    cfg.attack_spec(name);
    const auto records = read_records(paths.attack_results(name));
    if (records.empty()) {
      throw FormatError("no records in " + paths.attack_results(name).string(), 0);
    }
    std::vector<Tensor2D> outputs;
    AttackSummary s;
    s.name = name;
    s.include_failed = cfg.eval.include_failed;
    s.attempted = records.size();
    double linf_sum = 0.0;
    std::size_t pair_small = 0;
    double pair_sum = 0.0;
    for (const auto& r : records) {
      require_same_model(model.hash, r.model_hash, name + " results");
      if (r.attack != name) {
        throw FormatError("record for '" + r.attack + "' in " + name + " results", 0);
      }
      linf_sum += r.result.delta_linf;
      s.max_linf = std::max(s.max_linf, r.result.delta_linf);
      if (r.result.misclassified) ++s.successful;
      if (r.pair_cosine) {
        pair_sum += *r.pair_cosine;
        if (*r.pair_cosine <= 0.1) ++pair_small;
      }
      outputs.push_back(r.result.x_adv);
    }
    // Scores are recomputed from x_adv against the defender's phi; the score
    // stored in a record refers to whatever signature steered that attack.
    const auto all_scores = detection_scores(model.params, sig.phi, outputs);
    std::vector<double> adv;
    std::size_t detected_all = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (detect(all_scores[i], sig.tau)) ++detected_all;
      if (records[i].result.misclassified || cfg.eval.include_failed) adv.push_back(all_scores[i]);
    }
    const double n = static_cast<double>(records.size());
    s.success_rate = static_cast<double>(s.successful) / n;
    s.mean_linf = linf_sum / n;
    Json ex = {
        {"detected_at_tau_all_outputs", static_cast<double>(detected_all) / n},
    };
    if (adv.empty()) {
      log << name << ": no successful adversarial examples; ROC omitted\n";
      ex["roc_omitted"] = true;
    } else {
      std::size_t detected = 0;
      for (double v : adv) detected += detect(v, sig.tau) ? 1 : 0;
      s.detected_at_tau = static_cast<double>(detected) / static_cast<double>(adv.size());
      ex["auc_vs_all_benign"] = auc(adv, benign_all);
      ex["auc_vs_attacked_benign"] = auc(adv, benign_attacked);
      s.roc = make_roc_report(std::move(adv), benign, fprs);
    }
    if (name == "ortho-pair") {
      ex["pair_cosine_mean"] = pair_sum / n;
      ex["pair_cosine_le_0.1"] = static_cast<double>(pair_small) / n;
    }
    extra[name] = ex;
    report.attacks.push_back(std::move(s));
  }
  if (fs::exists(paths.phi_estimate())) {
    const PhiEstimate est = load_phi_estimate(paths.phi_estimate());
    if (est.model_hash == model.hash) {
      extra["phi_estimate_cosine"] = cosine_similarity(est.phi.values(), sig.phi.values());
    }
  }
  report.extra = extra;
  emit_report(report, paths.report());
  return report;
}

void print_summary(const ExperimentReport& report, std::ostream& out) {
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %9s %8s %12s\n", "attack", "success", "AUC",
                "TPR@10%FPR");
  out << line;
  for (const auto& a : report.attacks) {
    const auto it = a.roc.tpr_at.find(0.1);
    if (a.roc.adv_scores.empty()) {
      std::snprintf(line, sizeof line, "%-18s %9.4f %8s %12s\n", a.name.c_str(), a.success_rate,
                    "-", "-");
    } else {
      std::snprintf(line, sizeof line, "%-18s %9.4f %8.4f %12.4f\n", a.name.c_str(), a.success_rate,
                    a.roc.auc, it == a.roc.tpr_at.end() ? -1.0 : it->second);
    }
    out << line;
  }
}

ExperimentReport cmd_full_run(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  Json timings = Json::object();
  const auto start = std::chrono::steady_clock::now();
  auto timed = [&](const std::string& stage, const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    timings[stage] = elapsed_since(t0);
  };
  timed("gen-data", [&] { cmd_gen_data(cfg, paths, log); });
  timed("train", [&] { cmd_train(cfg, paths, log); });
  // A stale estimate from an earlier run must not leak into this one.
  fs::remove(paths.phi_estimate());
  for (auto name : kAttackNames) {
    timed("attack." + std::string(name), [&] { cmd_attack(cfg, paths, std::string(name), log); });
  }
  ExperimentReport report;
  timed("evaluate", [&] { report = cmd_evaluate(cfg, paths, {}, log); });
  timings["total"] = elapsed_since(start);
  write_text_file(paths.timings(), to_canonical_json(timings));
  print_summary(report, log);
  return report;
}

}  // namespace trapnet
