#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "trapnet/tensor.hpp"

namespace trapnet {

enum class Activation { relu };

/// Fully connected classifier shape. The hidden vector h(x) used by the
/// detector is the post-activation of the last entry in hidden_dims.
struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::relu;

  /// Throws ConfigError on zero dims, no hidden layer or fewer than two classes.
  void validate() const;
  std::size_t hidden_dim() const { return hidden_dims.back(); }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// One affine layer: out = in * weight + bias, with weight (fan_in x fan_out)
/// and bias (1 x fan_out).
struct Layer {
  Tensor2D weight;
  Tensor2D bias;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct ModelParams {
  Architecture arch;
  std::vector<Layer> layers;  // hidden layers followed by the logits layer

  /// Throws ShapeError if the layer shapes do not chain through arch.
  void validate() const;
  std::size_t num_parameters() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Same layout as ModelParams::layers.
using ParamGrads = std::vector<Layer>;

struct ForwardTrace {
  std::vector<Tensor2D> pre;   // pre-activation of each hidden layer
  std::vector<Tensor2D> post;  // post-activation of each hidden layer
  Tensor2D hidden;             // == post.back()
  Tensor2D logits;

  std::size_t predicted_class() const;
};

ModelParams init_model(const Architecture& arch, std::uint64_t seed);

ForwardTrace forward(const ModelParams& params, const Tensor2D& x);

std::size_t predict(const ModelParams& params, const Tensor2D& x);

std::vector<double> softmax(const Tensor2D& logits);

/// -log softmax(logits)[y], computed with max-subtracted log-sum-exp.
double xent_loss(const Tensor2D& logits, std::size_t y);

struct LossAndGrads {
  double loss = 0.0;  // mean cross-entropy over the batch
  ParamGrads grads;
};

/// Gradient of mean cross-entropy over the batch w.r.t. every weight and bias.
LossAndGrads grad_params(const ModelParams& params, std::span<const Tensor2D> inputs,
                         std::span<const std::size_t> labels);

/// d L_xe(f(x), y) / dx.
Tensor2D grad_input_xent(const ModelParams& params, const Tensor2D& x, std::size_t y);

/// d sim(h(x), phi) / dx. Throws DegenerateError if h(x) or phi is zero.
Tensor2D grad_input_detection(const ModelParams& params, const Tensor2D& x,
                              const Tensor2D& phi);

/// Both input gradients from a single forward pass. `detection` is empty when
/// h(x) is the zero vector.
struct InputGrads {
  ForwardTrace trace;
  Tensor2D xent;
  Tensor2D detection;
};

InputGrads grad_input_both(const ModelParams& params, const Tensor2D& x, std::size_t y,
                           const Tensor2D& phi);

/// params - lr * grads. lr must be non-negative; non-finite grads raise NumericError.
ModelParams sgd_step(const ModelParams& params, const ParamGrads& grads, double lr);

/// In-place form of sgd_step used by the training loop.
void apply_sgd(ModelParams& params, const ParamGrads& grads, double lr);

}  // namespace trapnet
