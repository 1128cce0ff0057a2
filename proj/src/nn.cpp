#include "trapnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trapnet/error.hpp"
#include "trapnet/rng.hpp"

namespace trapnet {

namespace {

const Tensor2D& layer_input(const ForwardTrace& trace, const Tensor2D& x, std::size_t i) {
  return i == 0 ? x : trace.post[i - 1];
}

// out[k] = sum_j in[j] * W[j,k] + b[k]
void affine(const Tensor2D& in, const Layer& layer, Tensor2D& out) {
  const std::size_t fan_in = layer.weight.rows();
  const std::size_t fan_out = layer.weight.cols();
  out = layer.bias;
  const double* w = layer.weight.values().data();
  double* o = out.values().data();
  const double* a = in.values().data();
  for (std::size_t j = 0; j < fan_in; ++j) {
    const double aj = a[j];
    if (aj == 0.0) continue;
    const double* wrow = w + j * fan_out;
    for (std::size_t k = 0; k < fan_out; ++k) o[k] += aj * wrow[k];
  }
}

// g_in[j] = sum_k W[j,k] * g[k]
Tensor2D affine_backward(const Layer& layer, const Tensor2D& g) {
  const std::size_t fan_in = layer.weight.rows();
  const std::size_t fan_out = layer.weight.cols();
  Tensor2D out(1, fan_in);
  const double* w = layer.weight.values().data();
  for (std::size_t j = 0; j < fan_in; ++j) {
    const double* wrow = w + j * fan_out;
    double s = 0.0;
    for (std::size_t k = 0; k < fan_out; ++k) s += wrow[k] * g[k];
    out[j] = s;
  }
  return out;
}

void accumulate_param_grad(Layer& acc, const Tensor2D& in, const Tensor2D& g) {
  const std::size_t fan_in = acc.weight.rows();
  const std::size_t fan_out = acc.weight.cols();
  double* w = acc.weight.values().data();
  for (std::size_t j = 0; j < fan_in; ++j) {
    const double aj = in[j];
    if (aj == 0.0) continue;
    double* wrow = w + j * fan_out;
    for (std::size_t k = 0; k < fan_out; ++k) wrow[k] += aj * g[k];
  }
  for (std::size_t k = 0; k < fan_out; ++k) acc.bias[k] += g[k];
}

ParamGrads zero_grads(const ModelParams& params) {
  ParamGrads g;
  g.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    g.push_back({Tensor2D(layer.weight.rows(), layer.weight.cols()),
                 Tensor2D(layer.bias.rows(), layer.bias.cols())});
  }
  return g;
}

// Backpropagates dL/dlogits (plus an optional extra dL/dh) to the input,
// accumulating parameter gradients into `param_grads` when it is non-null.
Tensor2D backward(const ModelParams& params, const ForwardTrace& trace, const Tensor2D& x,
                  const Tensor2D& dlogits, const Tensor2D* dhidden, ParamGrads* param_grads) {
  const std::size_t num_layers = params.layers.size();
  Tensor2D g = dlogits;
  for (std::size_t i = num_layers; i-- > 0;) {
    const bool is_logits = (i + 1 == num_layers);
    if (!is_logits) {
      if (i + 2 == num_layers && dhidden != nullptr) {
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += (*dhidden)[k];
      }
      const Tensor2D& pre = trace.pre[i];
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (pre[k] <= 0.0) g[k] = 0.0;
      }
    }
    if (param_grads != nullptr) {
      accumulate_param_grad((*param_grads)[i], layer_input(trace, x, i), g);
    }
    g = affine_backward(params.layers[i], g);
  }
  return g;
}

Tensor2D xent_logit_grad(const Tensor2D& logits, std::size_t y) {
  auto p = softmax(logits);
  p[y] -= 1.0;
  return Tensor2D::row(std::move(p));
}

Tensor2D cosine_hidden_grad(const Tensor2D& hidden, const Tensor2D& phi) {
  const double nh = l2_norm(hidden.values());
  const double np = l2_norm(phi.values());
  if (nh == 0.0) throw DegenerateError("detection gradient: hidden vector is zero");
  if (np == 0.0) throw DegenerateError("detection gradient: signature is zero");
  const double cos = dot(hidden.values(), phi.values()) / (nh * np);
  Tensor2D g(1, hidden.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    g[k] = phi[k] / (nh * np) - cos * hidden[k] / (nh * nh);
  }
  return g;
}

void check_input(const ModelParams& params, const Tensor2D& x) {
  if (x.size() != params.arch.input_dim) {
    throw ShapeError("input of size " + std::to_string(x.size()) + " for model with input_dim " +
                     std::to_string(params.arch.input_dim));
  }
}

void check_label(const ModelParams& params, std::size_t y) {
  if (y >= params.arch.num_classes) {
    throw IndexError("label " + std::to_string(y) + " out of range for " +
                     std::to_string(params.arch.num_classes) + " classes");
  }
}

}  // namespace

void Architecture::validate() const {
  if (input_dim == 0) throw ConfigError("architecture: input_dim must be >= 1");
  if (hidden_dims.empty()) throw ConfigError("architecture: at least one hidden layer required");
  for (auto d : hidden_dims) {
    if (d == 0) throw ConfigError("architecture: hidden dims must be >= 1");
  }
  if (num_classes < 2) throw ConfigError("architecture: num_classes must be >= 2");
}

void ModelParams::validate() const {
  arch.validate();
  if (layers.size() != arch.hidden_dims.size() + 1) {
    throw ShapeError("model has " + std::to_string(layers.size()) + " layers, architecture needs " +
                     std::to_string(arch.hidden_dims.size() + 1));
  }
  std::size_t fan_in = arch.input_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::size_t fan_out =
        i < arch.hidden_dims.size() ? arch.hidden_dims[i] : arch.num_classes;
    const auto& l = layers[i];
    if (l.weight.rows() != fan_in || l.weight.cols() != fan_out || l.bias.rows() != 1 ||
        l.bias.cols() != fan_out) {
      throw ShapeError("layer " + std::to_string(i) + " has weight " + l.weight.shape_string() +
                       " and bias " + l.bias.shape_string());
    }
    fan_in = fan_out;
  }
}

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::size_t ForwardTrace::predicted_class() const {
  const auto v = logits.values();
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  ModelParams params{arch, {}};
  std::size_t fan_in = arch.input_dim;
  const std::size_t num_layers = arch.hidden_dims.size() + 1;
  for (std::size_t i = 0; i < num_layers; ++i) {
    const std::size_t fan_out =
        i < arch.hidden_dims.size() ? arch.hidden_dims[i] : arch.num_classes;
    Tensor2D w(fan_in, fan_out);
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : w.values()) v = rng.normal(0.0, scale);
    params.layers.push_back({std::move(w), Tensor2D(1, fan_out)});
    fan_in = fan_out;
  }
  return params;
}

ForwardTrace forward(const ModelParams& params, const Tensor2D& x) {
  check_input(params, x);
  const std::size_t num_hidden = params.arch.hidden_dims.size();
  ForwardTrace trace;
  trace.pre.resize(num_hidden);
  trace.post.resize(num_hidden);
  for (std::size_t i = 0; i < num_hidden; ++i) {
    affine(layer_input(trace, x, i), params.layers[i], trace.pre[i]);
    trace.post[i] = trace.pre[i];
    for (auto& v : trace.post[i].values()) v = std::max(v, 0.0);
  }
  trace.hidden = trace.post.back();
  affine(trace.hidden, params.layers.back(), trace.logits);
  return trace;
}

std::size_t predict(const ModelParams& params, const Tensor2D& x) {
  return forward(params, x).predicted_class();
}

std::vector<double> softmax(const Tensor2D& logits) {
  const auto v = logits.values();
  const double m = *std::max_element(v.begin(), v.end());
  std::vector<double> p(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    p[i] = std::exp(v[i] - m);
    z += p[i];
  }
  for (auto& pi : p) pi /= z;
  return p;
}

double xent_loss(const Tensor2D& logits, std::size_t y) {
  if (y >= logits.size()) {
    throw IndexError("label " + std::to_string(y) + " out of range for " +
                     std::to_string(logits.size()) + " logits");
  }
  const auto v = logits.values();
  const double m = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double li : v) z += std::exp(li - m);
  return m + std::log(z) - v[y];
}

LossAndGrads grad_params(const ModelParams& params, std::span<const Tensor2D> inputs,
                         std::span<const std::size_t> labels) {
  if (inputs.empty()) throw ShapeError("grad_params: empty batch");
  if (inputs.size() != labels.size()) {
    throw ShapeError("grad_params: " + std::to_string(inputs.size()) + " inputs but " +
                     std::to_string(labels.size()) + " labels");
  }
  LossAndGrads out{0.0, zero_grads(params)};
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    check_label(params, labels[n]);
    const auto trace = forward(params, inputs[n]);
    out.loss += xent_loss(trace.logits, labels[n]);
    backward(params, trace, inputs[n], xent_logit_grad(trace.logits, labels[n]), nullptr,
             &out.grads);
  }
  const double inv = 1.0 / static_cast<double>(inputs.size());
  out.loss *= inv;
  for (auto& l : out.grads) {
    for (auto& v : l.weight.values()) v *= inv;
    for (auto& v : l.bias.values()) v *= inv;
  }
  return out;
}

Tensor2D grad_input_xent(const ModelParams& params, const Tensor2D& x, std::size_t y) {
  check_label(params, y);
  const auto trace = forward(params, x);
  return backward(params, trace, x, xent_logit_grad(trace.logits, y), nullptr, nullptr);
}

Tensor2D grad_input_detection(const ModelParams& params, const Tensor2D& x,
                              const Tensor2D& phi) {
  if (phi.size() != params.arch.hidden_dim()) {
    throw ShapeError("signature of size " + std::to_string(phi.size()) +
                     " for hidden dimension " + std::to_string(params.arch.hidden_dim()));
  }
  const auto trace = forward(params, x);
  const Tensor2D dh = cosine_hidden_grad(trace.hidden, phi);
  const Tensor2D zero_logits(1, params.arch.num_classes);
  return backward(params, trace, x, zero_logits, &dh, nullptr);
}

InputGrads grad_input_both(const ModelParams& params, const Tensor2D& x, std::size_t y,
                           const Tensor2D& phi) {
  check_label(params, y);
  if (phi.size() != params.arch.hidden_dim()) {
    throw ShapeError("signature of size " + std::to_string(phi.size()) +
                     " for hidden dimension " + std::to_string(params.arch.hidden_dim()));
  }
  InputGrads out;
  out.trace = forward(params, x);
  out.xent = backward(params, out.trace, x, xent_logit_grad(out.trace.logits, y), nullptr,
                      nullptr);
  if (l2_norm(out.trace.hidden.values()) > 0.0) {
    const Tensor2D dh = cosine_hidden_grad(out.trace.hidden, phi);
    const Tensor2D zero_logits(1, params.arch.num_classes);
    out.detection = backward(params, out.trace, x, zero_logits, &dh, nullptr);
  }
  return out;
}

void apply_sgd(ModelParams& params, const ParamGrads& grads, double lr) {
  if (!(lr >= 0.0)) throw ConfigError("sgd_step: learning rate must be non-negative");
  if (grads.size() != params.layers.size()) {
    throw ShapeError("sgd_step: gradient has " + std::to_string(grads.size()) + " layers");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require_same_size(params.layers[i].weight, grads[i].weight, "sgd_step weight");
    require_same_size(params.layers[i].bias, grads[i].bias, "sgd_step bias");
    if (!grads[i].weight.all_finite() || !grads[i].bias.all_finite()) {
      throw NumericError("sgd_step: non-finite gradient in layer " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto w = params.layers[i].weight.values();
    auto gw = grads[i].weight.values();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * gw[k];
    auto b = params.layers[i].bias.values();
    auto gb = grads[i].bias.values();
    for (std::size_t k = 0; k < b.size(); ++k) b[k] -= lr * gb[k];
  }
}

ModelParams sgd_step(const ModelParams& params, const ParamGrads& grads, double lr) {
  ModelParams next = params;
  apply_sgd(next, grads, lr);
  return next;
}

}  // namespace trapnet
