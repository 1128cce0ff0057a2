#include "trapnet/artifacts.hpp"

#include <sstream>

#include "trapnet/error.hpp"
#include "trapnet/rng.hpp"

namespace trapnet {

namespace {

constexpr int kVersion = 1;

// Structural problems in a parsed document carry no meaningful byte offset.
template <class Fn>
auto guarded(const std::string& what, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    throw FormatError("malformed " + what + ": " + e.what(), 0);
  }
}

void expect_format(const Json& j, const char* format) {
  if (j.at("format").get<std::string>() != format) {
    throw FormatError(std::string("expected a ") + format + " document", 0);
  }
}

Json attack_config_json(const AttackConfig& c) {
  return {
      {"epsilon", c.epsilon},
      {"eta", c.eta},
      {"lambda", c.lambda_weight},
      {"iterations", c.iterations},
      {"step_rule", std::string(to_string(c.step_rule))},
      {"ortho_mode", std::string(to_string(c.ortho_mode))},
      {"random_start", c.random_start},
      {"seed", c.seed},
  };
}

}  // namespace

Json tensor_to_json(const Tensor2D& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"values", t.data()}};
}

Tensor2D tensor_from_json(const Json& j) {
  return Tensor2D(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("values").get<std::vector<double>>());
}

Json model_to_json(const ModelParams& params) {
  Json layers = Json::array();
  for (const auto& l : params.layers) {
    layers.push_back({{"weight", tensor_to_json(l.weight)}, {"bias", tensor_to_json(l.bias)}});
  }
  return {
      {"format", "trapnet-model"},
      {"version", kVersion},
      {"architecture",
       {{"input_dim", params.arch.input_dim},
        {"hidden_dims", params.arch.hidden_dims},
        {"num_classes", params.arch.num_classes},
        {"activation", "relu"}}},
      {"layers", layers},
  };
}

ModelParams model_from_json(const Json& j) {
  ModelParams p = guarded("model", [&] {
    expect_format(j, "trapnet-model");
    ModelParams out;
    const auto& a = j.at("architecture");
    out.arch.input_dim = a.at("input_dim").get<std::size_t>();
    out.arch.hidden_dims = a.at("hidden_dims").get<std::vector<std::size_t>>();
    out.arch.num_classes = a.at("num_classes").get<std::size_t>();
    if (a.at("activation").get<std::string>() != "relu") {
      throw FormatError("unsupported activation", 0);
    }
    for (const auto& l : j.at("layers")) {
      out.layers.push_back({tensor_from_json(l.at("weight")), tensor_from_json(l.at("bias"))});
    }
    return out;
  });
  try {
    p.arch.validate();
    p.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent model: ") + e.what(), 0);
  }
  return p;
}

std::string save_model(const ModelParams& params, const std::filesystem::path& path) {
  const std::string text = to_canonical_json(model_to_json(params));
  write_text_file(path, text);
  return sha256_hex(text);
}

LoadedModel load_model(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError("invalid JSON in " + path.string() + ": " + e.what(), e.byte);
  }
  return {model_from_json(j), sha256_hex(text)};
}

void save_trapdoor(const Trapdoor& t, const std::filesystem::path& path) {
  write_text_file(path, to_canonical_json({
                            {"format", "trapnet-trapdoor"},
                            {"version", kVersion},
                            {"mask", tensor_to_json(t.mask)},
                            {"pattern", tensor_to_json(t.pattern)},
                            {"target_class", t.target_class},
                            {"amplitude", t.amplitude},
                        }));
}

Trapdoor load_trapdoor(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  return guarded("trapdoor", [&] {
    expect_format(j, "trapnet-trapdoor");
    Trapdoor t;
    t.mask = tensor_from_json(j.at("mask"));
    t.pattern = tensor_from_json(j.at("pattern"));
    t.target_class = j.at("target_class").get<std::size_t>();
    t.amplitude = j.at("amplitude").get<double>();
    return t;
  });
}

Json signature_to_json(const Signature& s) {
  return {
      {"format", "trapnet-signature"},
      {"version", kVersion},
      {"phi", s.phi.data()},
      {"tau", s.tau},
      {"fpr_target", s.fpr_target},
      {"calibration_size", s.calibration_size},
      {"model_hash", s.model_hash},
      {"phi_source", s.phi_source},
  };
}

Signature signature_from_json(const Json& j) {
  return guarded("signature", [&] {
    expect_format(j, "trapnet-signature");
    Signature s;
    s.phi = Tensor2D::row(j.at("phi").get<std::vector<double>>());
    s.tau = j.at("tau").get<double>();
    s.fpr_target = j.at("fpr_target").get<double>();
    s.calibration_size = j.at("calibration_size").get<std::size_t>();
    s.model_hash = j.at("model_hash").get<std::string>();
    s.phi_source = j.at("phi_source").get<std::string>();
    return s;
  });
}

void save_signature(const Signature& s, const std::filesystem::path& path) {
  write_text_file(path, to_canonical_json(signature_to_json(s)));
}

Signature load_signature(const std::filesystem::path& path) {
  return signature_from_json(read_json_file(path));
}

void save_phi_estimate(const PhiEstimate& e, const std::filesystem::path& path) {
  write_text_file(path, to_canonical_json({
                            {"format", "trapnet-phi-estimate"},
                            {"version", kVersion},
                            {"phi", e.phi.data()},
                            {"model_hash", e.model_hash},
                            {"base_attack", e.base_attack},
                            {"samples", e.samples},
                        }));
}

PhiEstimate load_phi_estimate(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  return guarded("phi estimate", [&] {
    expect_format(j, "trapnet-phi-estimate");
    PhiEstimate e;
    e.phi = Tensor2D::row(j.at("phi").get<std::vector<double>>());
    e.model_hash = j.at("model_hash").get<std::string>();
    e.base_attack = j.at("base_attack").get<std::string>();
    e.samples = j.at("samples").get<std::size_t>();
    return e;
  });
}

void save_eval_set(const EvalSet& s, const std::filesystem::path& path) {
  write_text_file(path, to_canonical_json({
                            {"format", "trapnet-eval-set"},
                            {"version", kVersion},
                            {"indices", s.indices},
                            {"model_hash", s.model_hash},
                            {"rule", s.rule},
                        }));
}

EvalSet load_eval_set(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  return guarded("eval set", [&] {
    expect_format(j, "trapnet-eval-set");
    EvalSet s;
    s.indices = j.at("indices").get<std::vector<std::size_t>>();
    s.model_hash = j.at("model_hash").get<std::string>();
    s.rule = j.at("rule").get<std::string>();
    return s;
  });
}

Json record_to_json(const AttackRecord& r) {
  const AttackResult& res = r.result;
  Json j = attack_config_json(r.config);
  j["index"] = r.index;
  j["attack"] = r.attack;
  j["model_hash"] = r.model_hash;
  j["label"] = res.label;
  j["misclassified"] = res.misclassified;
  j["delta_linf"] = res.delta_linf;
  j["detection_score"] = res.detection_score ? Json(*res.detection_score) : Json(nullptr);
  j["iterations_used"] = res.iterations_used;
  j["degenerate_steps"] = res.degenerate_steps;
  j["x_adv"] = res.x_adv.data();
  if (r.pair_cosine) j["pair_cosine"] = *r.pair_cosine;
  if (r.chose_second) j["chose_second"] = *r.chose_second;
  return j;
}

AttackRecord record_from_json(const Json& j) {
  return guarded("attack record", [&] {
    AttackRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.attack = j.at("attack").get<std::string>();
    r.model_hash = j.at("model_hash").get<std::string>();
    r.config.epsilon = j.at("epsilon").get<double>();
    r.config.eta = j.at("eta").get<double>();
    r.config.lambda_weight = j.at("lambda").get<double>();
    r.config.iterations = j.at("iterations").get<std::size_t>();
    r.config.step_rule = parse_step_rule(j.at("step_rule").get<std::string>());
    r.config.ortho_mode = parse_ortho_mode(j.at("ortho_mode").get<std::string>());
    r.config.random_start = j.at("random_start").get<bool>();
    r.config.seed = j.at("seed").get<std::uint64_t>();
    AttackResult& res = r.result;
    res.label = j.at("label").get<std::size_t>();
    res.misclassified = j.at("misclassified").get<bool>();
    res.delta_linf = j.at("delta_linf").get<double>();
    if (!j.at("detection_score").is_null()) {
      res.detection_score = j["detection_score"].get<double>();
    }
    res.iterations_used = j.at("iterations_used").get<std::size_t>();
    res.degenerate_steps = j.at("degenerate_steps").get<std::size_t>();
    res.x_adv = Tensor2D::row(j.at("x_adv").get<std::vector<double>>());
    if (j.contains("pair_cosine")) r.pair_cosine = j["pair_cosine"].get<double>();
    if (j.contains("chose_second")) r.chose_second = j["chose_second"].get<bool>();
    return r;
  });
}

void write_records(const std::vector<AttackRecord>& records, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : records) {
    text += to_canonical_json_line(record_to_json(r));
    text += '\n';
  }
  write_text_file(path, text);
}

std::vector<AttackRecord> read_records(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<AttackRecord> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) {
      Json j;
      try {
        j = Json::parse(text.substr(start, end - start));
      } catch (const Json::parse_error& e) {
        throw FormatError("invalid JSON line in " + path.string() + ": " + e.what(),
                          start + e.byte - 1);
      }
      out.push_back(record_from_json(j));
    }
    start = end + 1;
  }
  return out;
}

}  // namespace trapnet
