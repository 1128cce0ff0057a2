#include "trapnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include "toml.hpp"

#include "trapnet/error.hpp"
#include "trapnet/rng.hpp"

namespace trapnet {

namespace {

using KeySet = std::set<std::string, std::less<>>;

class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool present() const { return table_ != nullptr; }

  void check_keys(const KeySet& allowed) const {
    if (table_ == nullptr) return;
    for (const auto& [key, node] : *table_) {
      if (!allowed.contains(key.str())) {
        throw ConfigError("unknown key '" + std::string(key.str()) + "' in [" + name_ + "]");
      }
    }
  }

  bool has(std::string_view key) const { return table_ != nullptr && table_->contains(key); }

  void read(std::string_view key, double& out) const {
    const toml::node* n = find(key);
    if (n == nullptr) return;
    if (auto v = n->value_exact<double>()) {
      out = *v;
    } else if (auto i = n->value_exact<std::int64_t>()) {
      out = static_cast<double>(*i);
    } else {
      type_error(key, "a number");
    }
  }

  void read(std::string_view key, std::size_t& out) const {
    const toml::node* n = find(key);
    if (n == nullptr) return;
    auto v = n->value_exact<std::int64_t>();
    if (!v || *v < 0) type_error(key, "a non-negative integer");
    out = static_cast<std::size_t>(*v);
  }

  // Seeds are never defaulted: every run must state its master seed.
  void read_required(std::string_view key, std::uint64_t& out) const {
    const toml::node* n = find(key);
    if (n == nullptr) throw ConfigError("[" + name_ + "] " + std::string(key) + " is required");
    auto v = n->value_exact<std::int64_t>();
    if (!v || *v < 0) type_error(key, "a non-negative integer");
    out = static_cast<std::uint64_t>(*v);
  }

  void read(std::string_view key, bool& out) const {
    const toml::node* n = find(key);
    if (n == nullptr) return;
    auto v = n->value_exact<bool>();
    if (!v) type_error(key, "a boolean");
    out = *v;
  }

  void read(std::string_view key, std::string& out) const {
    const toml::node* n = find(key);
    if (n == nullptr) return;
    auto v = n->value_exact<std::string>();
    if (!v) type_error(key, "a string");
    out = *v;
  }

  void read(std::string_view key, std::optional<std::string>& out) const {
    if (!has(key)) return;
    std::string s;
    read(key, s);
    out = s;
  }

  template <class T>
  void read_list(std::string_view key, std::vector<T>& out) const {
    const toml::node* n = find(key);
    if (n == nullptr) return;
    const toml::array* arr = n->as_array();
    if (arr == nullptr) type_error(key, "an array");
    std::vector<T> values;
    for (const auto& item : *arr) {
      if constexpr (std::is_same_v<T, double>) {
        if (auto v = item.value_exact<double>()) {
          values.push_back(*v);
        } else if (auto i = item.value_exact<std::int64_t>()) {
          values.push_back(static_cast<double>(*i));
        } else {
          type_error(key, "an array of numbers");
        }
      } else {
        auto v = item.value_exact<std::int64_t>();
        if (!v || *v < 0) type_error(key, "an array of non-negative integers");
        values.push_back(static_cast<T>(*v));
      }
    }
    out = std::move(values);
  }

 private:
  const toml::node* find(std::string_view key) const {
    return table_ == nullptr ? nullptr : table_->get(key);
  }

  [[noreturn]] void type_error(std::string_view key, const char* expected) const {
    throw ConfigError("[" + name_ + "] " + std::string(key) + " must be " + expected);
  }

  const toml::table* table_;
  std::string name_;
};

Section section(const toml::table& root, std::string_view name) {
  const toml::node* n = root.get(name);
  if (n == nullptr) return {nullptr, std::string(name)};
  const toml::table* t = n->as_table();
  if (t == nullptr) throw ConfigError("'" + std::string(name) + "' must be a table");
  return {t, std::string(name)};
}

const KeySet kAttackKeys = {"epsilon", "eta", "lambda", "iterations", "step_rule",
                            "ortho_mode", "random_start"};

void read_attack(const Section& s, AttackConfig& a) {
  s.read("epsilon", a.epsilon);
  s.read("eta", a.eta);
  s.read("lambda", a.lambda_weight);
  s.read("iterations", a.iterations);
  s.read("random_start", a.random_start);
  std::string text;
  if (s.has("step_rule")) {
    s.read("step_rule", text);
    a.step_rule = parse_step_rule(text);
  }
  if (s.has("ortho_mode")) {
    s.read("ortho_mode", text);
    a.ortho_mode = parse_ortho_mode(text);
  }
}

Json attack_json(const AttackConfig& a) {
  return {
      {"epsilon", a.epsilon},
      {"eta", a.eta},
      {"lambda", a.lambda_weight},
      {"iterations", a.iterations},
      {"step_rule", std::string(to_string(a.step_rule))},
      {"ortho_mode", std::string(to_string(a.ortho_mode))},
      {"random_start", a.random_start},
      {"seed", a.seed},
  };
}

}  // namespace

bool is_attack_name(std::string_view name) {
  return std::find(kAttackNames.begin(), kAttackNames.end(), name) != kAttackNames.end();
}

bool is_signature_free(std::string_view name) {
  return name == "no-signature" || name == "ortho-pair";
}

std::string_view to_string(BenignPopulation p) {
  return p == BenignPopulation::attacked ? "attacked" : "all";
}

std::uint64_t RunConfig::stage_seed(std::string_view stage) const {
  return derive_seed(master_seed, stage);
}

const AttackSpec& RunConfig::attack_spec(std::string_view name) const {
  auto it = attacks.find(std::string(name));
  if (it == attacks.end()) {
    std::string valid;
    for (auto n : kAttackNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
    throw ConfigError("unknown attack '" + std::string(name) + "' (valid: " + valid + ")");
  }
  return it->second;
}

Architecture RunConfig::architecture(std::size_t input_dim, std::size_t num_classes) const {
  Architecture arch;
  arch.input_dim = input_dim;
  arch.hidden_dims = hidden_dims;
  arch.num_classes = num_classes;
  return arch;
}

void RunConfig::validate() const {
  if (!idx_images) data.validate();
  if (idx_images.has_value() != idx_labels.has_value()) {
    throw ConfigError("[data] idx_images and idx_labels must be given together");
  }
  if (!(train_fraction > 0.0) || !(calibration_fraction > 0.0) ||
      !(train_fraction + calibration_fraction < 1.0)) {
    throw ConfigError("[data] train_fraction and calibration_fraction must be positive "
                      "and sum to less than 1");
  }
  if (!idx_images && trapdoor.target_class >= data.num_classes) {
    throw ConfigError("[trapdoor] target_class must be < num_classes");
  }
  if (!(trapdoor.amplitude > 0.0 && trapdoor.amplitude <= 1.0)) {
    throw ConfigError("[trapdoor] amplitude must be in (0, 1]");
  }
  if (trapdoor.patch_side == 0) throw ConfigError("[trapdoor] patch_side must be >= 1");
  if (hidden_dims.empty() ||
      std::any_of(hidden_dims.begin(), hidden_dims.end(), [](std::size_t d) { return d == 0; })) {
    throw ConfigError("[model] hidden_dims must be a non-empty list of positive sizes");
  }
  train.validate();
  if (!(detector.fpr_target > 0.0 && detector.fpr_target < 1.0)) {
    throw ConfigError("[detector] fpr_target must be in (0, 1)");
  }
  for (double f : detector.report_fprs) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("[detector] report_fprs must lie in (0, 1)");
  }
  for (const auto& [name, spec] : attacks) {
    spec.config.validate();
    if (spec.estimate_samples == 0) {
      throw ConfigError("[attacks." + name + "] estimate_samples must be >= 1");
    }
  }
}

RunConfig parse_config(std::string_view toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }

  const KeySet sections = {"seed",   "data", "trapdoor", "model", "train",
                           "detector", "eval", "attack",  "attacks", "output"};
  for (const auto& [key, node] : root) {
    if (!sections.contains(key.str())) {
      throw ConfigError(source + ": unknown section [" + std::string(key.str()) + "]");
    }
  }

  RunConfig cfg;

  auto seed = section(root, "seed");
  seed.check_keys({"master"});
  seed.read_required("master", cfg.master_seed);

  auto data = section(root, "data");
  data.check_keys({"num_classes", "image_side", "samples_per_class", "noise_sigma", "background",
                   "contrast", "train_fraction", "calibration_fraction", "idx_images",
                   "idx_labels"});
  data.read("num_classes", cfg.data.num_classes);
  data.read("image_side", cfg.data.image_side);
  data.read("samples_per_class", cfg.data.samples_per_class);
  data.read("noise_sigma", cfg.data.noise_sigma);
  data.read("background", cfg.data.background);
  data.read("contrast", cfg.data.contrast);
  data.read("train_fraction", cfg.train_fraction);
  data.read("calibration_fraction", cfg.calibration_fraction);
  data.read("idx_images", cfg.idx_images);
  data.read("idx_labels", cfg.idx_labels);

  auto trap = section(root, "trapdoor");
  trap.check_keys({"target_class", "patch_side", "amplitude"});
  trap.read("target_class", cfg.trapdoor.target_class);
  trap.read("patch_side", cfg.trapdoor.patch_side);
  trap.read("amplitude", cfg.trapdoor.amplitude);

  auto model = section(root, "model");
  model.check_keys({"hidden_dims"});
  model.read_list("hidden_dims", cfg.hidden_dims);

  auto train = section(root, "train");
  train.check_keys({"epochs", "batch_size", "lr", "poison_fraction"});
  train.read("epochs", cfg.train.epochs);
  train.read("batch_size", cfg.train.batch_size);
  train.read("lr", cfg.train.lr);
  train.read("poison_fraction", cfg.train.poison_fraction);

  auto det = section(root, "detector");
  det.check_keys({"fpr_target", "report_fprs"});
  det.read("fpr_target", cfg.detector.fpr_target);
  det.read_list("report_fprs", cfg.detector.report_fprs);

  auto ev = section(root, "eval");
  ev.check_keys({"include_failed", "benign_population", "max_inputs"});
  ev.read("include_failed", cfg.eval.include_failed);
  ev.read("max_inputs", cfg.eval.max_inputs);
  if (ev.has("benign_population")) {
    std::string p;
    ev.read("benign_population", p);
    if (p == "attacked") {
      cfg.eval.benign_population = BenignPopulation::attacked;
    } else if (p == "all") {
      cfg.eval.benign_population = BenignPopulation::all;
    } else {
      throw ConfigError("[eval] benign_population must be \"attacked\" or \"all\"");
    }
  }

  auto attack = section(root, "attack");
  attack.check_keys(kAttackKeys);
  read_attack(attack, cfg.attack);

  auto output = section(root, "output");
  output.check_keys({"dir"});
  output.read("dir", cfg.out_dir);

  const toml::table* per_attack = nullptr;
  if (const toml::node* n = root.get("attacks")) {
    per_attack = n->as_table();
    if (per_attack == nullptr) throw ConfigError("'attacks' must be a table");
    for (const auto& [key, node] : *per_attack) {
      if (!is_attack_name(key.str())) {
        throw ConfigError("unknown attack table [attacks." + std::string(key.str()) + "]");
      }
    }
  }

  for (auto name_view : kAttackNames) {
    const std::string name(name_view);
    AttackSpec spec;
    spec.name = name;
    spec.config = cfg.attack;
    if (name == "alternating") {
      spec.config.ortho_mode = OrthoMode::off;
    } else if (name == "alternating-ortho" || is_signature_free(name)) {
      spec.config.ortho_mode = OrthoMode::rejection;
    }
    if (per_attack != nullptr) {
      if (const toml::node* n = per_attack->get(name)) {
        const toml::table* t = n->as_table();
        if (t == nullptr) throw ConfigError("[attacks." + name + "] must be a table");
        Section s(t, "attacks." + name);
        KeySet keys = kAttackKeys;
        keys.insert("signature");
        if (is_signature_free(name)) keys.insert("estimate_samples");
        s.check_keys(keys);
        read_attack(s, spec.config);
        s.read("estimate_samples", spec.estimate_samples);
        s.read("signature", spec.signature_ref);
      }
    }
    spec.config.seed = cfg.stage_seed("attack." + name);
    cfg.attacks.emplace(name, std::move(spec));
  }

  cfg.data.seed = cfg.stage_seed("data");
  cfg.train.seed = cfg.stage_seed("train");
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file: " + path.string());
  }
  return parse_config(text, path.string());
}

Json config_to_json(const RunConfig& cfg) {
  Json attacks = Json::object();
  for (const auto& [name, spec] : cfg.attacks) {
    Json a = attack_json(spec.config);
    if (is_signature_free(name)) a["estimate_samples"] = spec.estimate_samples;
    attacks[name] = a;
  }
  Json data = {
      {"num_classes", cfg.data.num_classes},
      {"image_side", cfg.data.image_side},
      {"samples_per_class", cfg.data.samples_per_class},
      {"noise_sigma", cfg.data.noise_sigma},
      {"background", cfg.data.background},
      {"contrast", cfg.data.contrast},
      {"train_fraction", cfg.train_fraction},
      {"calibration_fraction", cfg.calibration_fraction},
      {"seed", cfg.data.seed},
  };
  if (cfg.idx_images) {
    data["idx_images"] = *cfg.idx_images;
    data["idx_labels"] = *cfg.idx_labels;
  }
  return {
      {"master_seed", cfg.master_seed},
      {"data", data},
      {"trapdoor",
       {{"target_class", cfg.trapdoor.target_class},
        {"patch_side", cfg.trapdoor.patch_side},
        {"amplitude", cfg.trapdoor.amplitude},
        {"seed", cfg.stage_seed("trapdoor")}}},
      {"model", {{"hidden_dims", cfg.hidden_dims}, {"seed", derive_seed(cfg.train.seed, "init")}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"lr", cfg.train.lr},
        {"poison_fraction", cfg.train.poison_fraction},
        {"seed", cfg.train.seed}}},
      {"detector",
       {{"fpr_target", cfg.detector.fpr_target}, {"report_fprs", cfg.detector.report_fprs}}},
      {"eval",
       {{"include_failed", cfg.eval.include_failed},
        {"benign_population", std::string(to_string(cfg.eval.benign_population))},
        {"max_inputs", cfg.eval.max_inputs}}},
      {"attacks", attacks},
  };
}

}  // namespace trapnet
