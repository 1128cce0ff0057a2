#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "trapnet/error.hpp"
#include "trapnet/nn.hpp"

using namespace trapnet;
using trapnet::testing::central_difference;
using trapnet::testing::max_relative_error;
using trapnet::testing::random_model;
using trapnet::testing::random_row;

TEST(Architecture, LayerShapesChain) {
  Architecture arch{3, {4}, 2};
  ModelParams p = init_model(arch, 7);
  ASSERT_EQ(p.layers.size(), 2u);
  EXPECT_EQ(p.layers[0].weight.rows(), 3u);
  EXPECT_EQ(p.layers[0].weight.cols(), 4u);
  EXPECT_EQ(p.layers[0].bias.size(), 4u);
  EXPECT_EQ(p.layers[1].weight.rows(), 4u);
  EXPECT_EQ(p.layers[1].weight.cols(), 2u);
  EXPECT_EQ(p.layers[1].bias.size(), 2u);
}

TEST(Architecture, RejectsDegenerateShapes) {
  EXPECT_THROW((Architecture{0, {4}, 2}.validate()), ConfigError);
  EXPECT_THROW((Architecture{3, {}, 2}.validate()), ConfigError);
  EXPECT_THROW((Architecture{3, {4, 0}, 2}.validate()), ConfigError);
  EXPECT_THROW((Architecture{3, {4}, 1}.validate()), ConfigError);
}

TEST(Init, SameSeedSameParameters) {
  Architecture arch{5, {6, 3}, 4};
  EXPECT_EQ(init_model(arch, 11), init_model(arch, 11));
  EXPECT_NE(init_model(arch, 11), init_model(arch, 12));
}

TEST(Forward, HandBuiltSingleUnit) {
  // x = (1, 2); hidden unit: relu(0.5*1 - 0.25*2 + 0.1) = 0.1
  // logits = (2*0.1 + 0.3, -1*0.1 - 0.2) = (0.5, -0.3)
  ModelParams p{Architecture{2, {1}, 2}, {}};
  p.layers.push_back({Tensor2D(2, 1, {0.5, -0.25}), Tensor2D(1, 1, {0.1})});
  p.layers.push_back({Tensor2D(1, 2, {2.0, -1.0}), Tensor2D(1, 2, {0.3, -0.2})});
  const auto t = forward(p, Tensor2D::row({1.0, 2.0}));
  EXPECT_NEAR(t.hidden[0], 0.1, 1e-15);
  EXPECT_NEAR(t.logits[0], 0.5, 1e-15);
  EXPECT_NEAR(t.logits[1], -0.3, 1e-15);
  EXPECT_EQ(t.predicted_class(), 0u);

  // Negative pre-activation is cut by the ReLU: logits fall back to the biases.
  const auto t2 = forward(p, Tensor2D::row({0.0, 2.0}));
  EXPECT_EQ(t2.hidden[0], 0.0);
  EXPECT_DOUBLE_EQ(t2.logits[0], 0.3);
  EXPECT_DOUBLE_EQ(t2.logits[1], -0.2);
}

TEST(Forward, HiddenIsLastPostActivation) {
  Rng rng(3);
  ModelParams p = random_model(rng, 6, {5, 4}, 3);
  const Tensor2D x = random_row(rng, 6);
  const auto t = forward(p, x);
  // Recompute layer by layer.
  Tensor2D a = x;
  for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
    Tensor2D out = p.layers[l].bias;
    for (std::size_t j = 0; j < a.size(); ++j) {
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += a[j] * p.layers[l].weight(j, k);
    }
    for (auto& v : out.values()) v = std::max(v, 0.0);
    a = out;
  }
  ASSERT_EQ(t.hidden.size(), 4u);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(t.hidden[k], a[k], 1e-14);
  EXPECT_EQ(t.hidden, t.post.back());
}

TEST(Forward, WrongInputSizeIsShapeError) {
  ModelParams p = init_model(Architecture{3, {4}, 2}, 1);
  EXPECT_THROW(forward(p, Tensor2D::row({1.0, 2.0})), ShapeError);
}

TEST(Loss, StableForLargeLogits) {
  const Tensor2D logits = Tensor2D::row({1000.0, 0.0, -1000.0});
  EXPECT_NEAR(xent_loss(logits, 0), 0.0, 1e-12);
  EXPECT_NEAR(xent_loss(logits, 1), 1000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(xent_loss(logits, 2)));
  const auto p = softmax(logits);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
}

TEST(Loss, EqualLogitsGiveLogK) {
  EXPECT_NEAR(xent_loss(Tensor2D::row({0.2, 0.2, 0.2, 0.2}), 2), std::log(4.0), 1e-15);
}

TEST(Loss, LabelOutOfRangeIsIndexError) {
  EXPECT_THROW(xent_loss(Tensor2D::row({0.0, 1.0}), 2), IndexError);
  ModelParams p = init_model(Architecture{3, {4}, 2}, 1);
  EXPECT_THROW(grad_input_xent(p, Tensor2D::row({0.1, 0.2, 0.3}), 5), IndexError);
}

TEST(Gradients, InputXentMatchesFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams p = random_model(rng, 7, {6, 5}, 3);
    const Tensor2D x = random_row(rng, 7);
    if (trapnet::testing::min_kink_distance(p, x) < 1e-3) continue;
    const std::size_t y = rng.below(3);
    const Tensor2D g = grad_input_xent(p, x, y);
    const auto fd = central_difference(
        [&](const Tensor2D& z) { return xent_loss(forward(p, z).logits, y); }, x);
    EXPECT_LT(max_relative_error(g.values(), fd), 1e-4) << "trial " << trial;
  }
}

TEST(Gradients, InputDetectionMatchesFiniteDifferences) {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams p = random_model(rng, 6, {8}, 3);
    const Tensor2D x = random_row(rng, 6);
    const Tensor2D phi = random_row(rng, 8, 0.0, 1.0);
    if (trapnet::testing::min_kink_distance(p, x) < 1e-3) continue;
    if (l2_norm(forward(p, x).hidden.values()) == 0.0) continue;
    const Tensor2D g = grad_input_detection(p, x, phi);
    const auto fd = central_difference(
        [&](const Tensor2D& z) {
          return cosine_similarity(forward(p, z).hidden.values(), phi.values());
        },
        x);
    EXPECT_LT(max_relative_error(g.values(), fd), 1e-4) << "trial " << trial;
  }
}

TEST(Gradients, BothMatchesSeparateCalls) {
  Rng rng(23);
  ModelParams p = random_model(rng, 5, {6}, 3);
  const Tensor2D x = random_row(rng, 5);
  const Tensor2D phi = random_row(rng, 6);
  const auto both = grad_input_both(p, x, 1, phi);
  EXPECT_EQ(both.xent, grad_input_xent(p, x, 1));
  if (!both.detection.empty()) EXPECT_EQ(both.detection, grad_input_detection(p, x, phi));
}

TEST(Gradients, DetectionErrorsOnZeroVectors) {
  ModelParams p = init_model(Architecture{2, {2}, 2}, 1);
  for (auto& w : p.layers[0].weight.values()) w = 0.0;
  for (auto& b : p.layers[0].bias.values()) b = -1.0;  // h(x) == 0 everywhere
  EXPECT_THROW(grad_input_detection(p, Tensor2D::row({0.5, 0.5}), Tensor2D::row({1.0, 1.0})),
               DegenerateError);
  const auto both = grad_input_both(p, Tensor2D::row({0.5, 0.5}), 0, Tensor2D::row({1.0, 1.0}));
  EXPECT_TRUE(both.detection.empty());

  ModelParams q = init_model(Architecture{2, {2}, 2}, 1);
  EXPECT_THROW(grad_input_detection(q, Tensor2D::row({0.5, 0.5}), Tensor2D::row({0.0, 0.0})),
               DegenerateError);
  EXPECT_THROW(grad_input_detection(q, Tensor2D::row({0.5, 0.5}), Tensor2D::row({1.0, 1.0, 1.0})),
               ShapeError);
}

TEST(Gradients, ParamsMatchFiniteDifferences) {
  Rng rng(24);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParams p = random_model(rng, 4, {5, 3}, 3);
    std::vector<Tensor2D> xs;
    std::vector<std::size_t> ys;
    for (int i = 0; i < 3; ++i) {
      xs.push_back(random_row(rng, 4));
      ys.push_back(rng.below(3));
    }
    const auto lg = grad_params(p, xs, ys);
    auto batch_loss = [&](const ModelParams& q) {
      double s = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) s += xent_loss(forward(q, xs[i]).logits, ys[i]);
      return s / static_cast<double>(xs.size());
    };
    EXPECT_NEAR(lg.loss, batch_loss(p), 1e-12);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (int which = 0; which < 2; ++which) {
        ModelParams q = p;
        Tensor2D& target = which == 0 ? q.layers[l].weight : q.layers[l].bias;
        const auto fd = central_difference(
            [&](const Tensor2D& v) {
              target = v;
              return batch_loss(q);
            },
            which == 0 ? p.layers[l].weight : p.layers[l].bias);
        const Tensor2D& g = which == 0 ? lg.grads[l].weight : lg.grads[l].bias;
        EXPECT_LT(max_relative_error(g.values(), fd), 1e-4) << "layer " << l;
      }
    }
  }
}

TEST(Sgd, StepMovesAgainstGradientAndRejectsBadInput) {
  ModelParams p = init_model(Architecture{2, {2}, 2}, 5);
  ParamGrads g;
  for (const auto& l : p.layers) {
    g.push_back({Tensor2D(l.weight.rows(), l.weight.cols(), 1.0),
                 Tensor2D(l.bias.rows(), l.bias.cols(), 1.0)});
  }
  const ModelParams q = sgd_step(p, g, 0.5);
  EXPECT_DOUBLE_EQ(q.layers[0].weight[0], p.layers[0].weight[0] - 0.5);
  EXPECT_EQ(sgd_step(p, g, 0.0), p);
  EXPECT_THROW(sgd_step(p, g, -1.0), ConfigError);
  g[0].bias[0] = NAN;
  EXPECT_THROW(sgd_step(p, g, 0.1), NumericError);
}

TEST(Loss, MatchesHandComputedValue) {
  // -log(e^3 / (e^1 + e^2 + e^3))
  const double expected = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
  EXPECT_NEAR(xent_loss(Tensor2D::row({1.0, 2.0, 3.0}), 2), expected, 1e-15);
  EXPECT_NEAR(expected, 0.40761, 1e-5);
}

TEST(Forward, ZeroWeightsGiveZeroLogits) {
  ModelParams p = init_model(Architecture{4, {3}, 3}, 1);
  for (auto& l : p.layers) {
    l.weight = Tensor2D(l.weight.rows(), l.weight.cols());
    l.bias = Tensor2D(l.bias.rows(), l.bias.cols());
  }
  const auto t = forward(p, Tensor2D::row({0.3, 0.9, 0.1, 0.5}));
  for (double v : t.logits.values()) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, DuplicatedBatchGivesSameMeanGradient) {
  Rng rng(21);
  const ModelParams p = random_model(rng, 5, {4}, 3);
  const std::vector<Tensor2D> one{random_row(rng, 5), random_row(rng, 5)};
  const std::vector<std::size_t> y1{0, 2};
  std::vector<Tensor2D> two = one;
  two.insert(two.end(), one.begin(), one.end());
  std::vector<std::size_t> y2 = y1;
  y2.insert(y2.end(), y1.begin(), y1.end());
  const LossAndGrads a = grad_params(p, one, y1);
  const LossAndGrads b = grad_params(p, two, y2);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  for (std::size_t l = 0; l < a.grads.size(); ++l) {
    for (std::size_t k = 0; k < a.grads[l].weight.size(); ++k) {
      EXPECT_NEAR(a.grads[l].weight[k], b.grads[l].weight[k], 1e-14);
    }
  }
}

TEST(Gradients, ZeroInputGivesZeroFirstLayerWeightGradient) {
  Rng rng(22);
  ModelParams p = random_model(rng, 5, {4}, 3);
  p.layers[0].bias = Tensor2D(1, 4);
  const std::vector<Tensor2D> xs{Tensor2D(1, 5)};
  const std::vector<std::size_t> ys{1};
  const LossAndGrads g = grad_params(p, xs, ys);
  for (double v : g.grads[0].weight.values()) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, DetectionGradientIgnoresSignatureScale) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams p = random_model(rng, 6, {5}, 3);
    const Tensor2D x = random_row(rng, 6);
    if (l2_norm(forward(p, x).hidden.values()) == 0.0) continue;
    const Tensor2D phi = random_row(rng, 5);
    Tensor2D phi10 = phi;
    for (auto& v : phi10.values()) v *= 10.0;
    const Tensor2D a = grad_input_detection(p, x, phi);
    const Tensor2D b = grad_input_detection(p, x, phi10);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-13);
  }
}

TEST(Sgd, SingleWeightExample) {
  ModelParams p{Architecture{1, {1}, 2}, {}};
  p.layers.push_back({Tensor2D(1, 1, 1.0), Tensor2D(1, 1)});
  p.layers.push_back({Tensor2D(1, 2), Tensor2D(1, 2)});
  ParamGrads g{{Tensor2D(1, 1, 2.0), Tensor2D(1, 1)}, {Tensor2D(1, 2), Tensor2D(1, 2)}};
  EXPECT_DOUBLE_EQ(sgd_step(p, g, 0.1).layers[0].weight[0], 0.8);
}
