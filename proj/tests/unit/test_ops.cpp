// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gradient_suite.hpp"
#include "oracles.hpp"
#include "pfmce/core/layers.hpp"
#include "pfmce/core/ops.hpp"

namespace pfmce {
namespace {

Tensor eval(Var v) { return v.value(); }

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  std::mt19937_64 rng(1);
  Graph g(false);
  Tensor a = Tensor::randn({2, 3}, rng);
  Tensor y = eval(ops::matmul(g.constant(Tensor::identity(2)), g.constant(a)));
  EXPECT_EQ(max_abs_diff(y, a), 0.0);
}

TEST(Matmul, HandSum) {
  Graph g(false);
  Tensor y = eval(ops::matmul(g.constant(Tensor({2, 2}, {1, 2, 3, 4})), g.constant(Tensor({2, 1}, {1, 1}))));
  ASSERT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_EQ(y[0], 3.0);
  EXPECT_EQ(y[1], 7.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(2);
  Graph g(false);
  Tensor a = Tensor::randn({5, 4}, rng), b = Tensor::randn({4, 3}, rng);
  Tensor y = eval(ops::matmul(g.constant(a), g.constant(b)));
  EXPECT_LT(max_abs_diff(y, oracle::matmul_loop(a, b)), 1e-12);
}

TEST(Matmul, ShapeMismatchThrows) {
  Graph g(false);
  EXPECT_THROW(ops::matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3}))), DimensionError);
}

TEST(MaskedSoftmax, Symmetric) {
  Graph g(false);
  Tensor y = eval(ops::masked_softmax(g.constant(Tensor({1, 2}, {0, 0})), Tensor({1, 2}, {0, 0})));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(MaskedSoftmax, ForcedByMask) {
  Graph g(false);
  for (Real m : {kMaskSentinel, -std::numeric_limits<Real>::infinity()}) {
    Tensor y = eval(ops::masked_softmax(g.constant(Tensor({1, 2}, {0, 0})), Tensor({1, 2}, {0, m})));
    EXPECT_EQ(y[0], 1.0);
    EXPECT_EQ(y[1], 0.0);
  }
}

TEST(MaskedSoftmax, ExtendedPrecisionOracle) {
  Graph g(false);
  Tensor y = eval(ops::masked_softmax(g.constant(Tensor({1, 3}, {1, 2, 3})), Tensor({1, 3}, {0, 0, 0})));
  auto ref = oracle::softmax_ld({1, 2, 3}, {0, 0, 0});
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(y[j], static_cast<double>(ref[j]), 1e-15);
}

TEST(MaskedSoftmax, RowsSumToOneAndMaskedAreZero) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 2 + seed % 7;
    Graph g(false);
    Tensor logits = Tensor::randn({n, n}, rng, 5);
    Tensor mask = causal_mask(n);
    Tensor y = eval(ops::masked_softmax(g.constant(logits), mask));
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) {
        s += y.at(i, j);
        if (j > i) EXPECT_EQ(y.at(i, j), 0.0);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(MaskedSoftmax, FullyMaskedRowThrows) {
  Graph g(false);
  EXPECT_THROW(ops::masked_softmax(g.constant(Tensor({1, 2}, {0, 0})), Tensor({1, 2}, {kMaskSentinel, kMaskSentinel})),
               NumericError);
}

TEST(AdaLayerNorm, ZeroConditioningStandardizes) {
  std::mt19937_64 rng(3);
  AdaLayerNorm ln(2, rng);
  Graph g(false);
  Tensor y = eval(ln(g, g.constant(Tensor({1, 2}, {2, 4})), g.constant(Tensor({1, 1}, {0.3})), 1));
  EXPECT_NEAR(y[0], -1.0, 1e-6);
  EXPECT_NEAR(y[1], 1.0, 1e-6);
}

TEST(AdaLayerNorm, ZeroGammaGivesBeta) {
  // modulation layout per condition: [gamma offset (c), beta (c)]
  std::mt19937_64 rng(4);
  Graph g(false);
  Tensor x = Tensor::randn({3, 4}, rng);
  Tensor mod({1, 8}, {-1, -1, -1, -1, 0.5, -2, 3, 0.25});
  Tensor y = eval(ops::ada_layer_norm(g.constant(x), g.constant(mod), 3));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y.at(r, c), mod[4 + c]);
}

TEST(AdaLayerNorm, DirectFormula) {
  std::mt19937_64 rng(5);
  AdaLayerNorm ln(6, rng);
  ln.modulation.weight.value = Tensor::randn({16, 12}, rng, 0.2);
  ln.modulation.bias.value = Tensor::randn({12}, rng, 0.2);
  Graph g(false);
  Tensor x = Tensor::randn({4, 6}, rng, 3);
  const Real cond = std::log(0.01 + 1e-12);
  Tensor y = eval(ln(g, g.constant(x), g.constant(Tensor({1, 1}, {cond})), 4));

  // conditioning net by hand
  std::vector<double> h(16), mod(12);
  for (int j = 0; j < 16; ++j) {
    double a = ln.hidden.weight.value[j] * cond + ln.hidden.bias.value[j];
    h[j] = 0.5 * a * (1 + std::erf(a / std::sqrt(2.0)));
  }
  for (int o = 0; o < 12; ++o) {
    double s = ln.modulation.bias.value[o];
    for (int j = 0; j < 16; ++j) s += h[j] * ln.modulation.weight.value.at(j, o);
    mod[o] = s;
  }
  double beta_mean = 0;
  for (int c = 0; c < 6; ++c) beta_mean += mod[6 + c] / 6;
  for (std::size_t r = 0; r < 4; ++r) {
    std::vector<double> row(6);
    for (int c = 0; c < 6; ++c) row[c] = x.at(r, c);
    auto z = oracle::standardize(row);
    double mean = 0, zg = 0;
    for (int c = 0; c < 6; ++c) {
      const double expect = z[c] * (1 + mod[c]) + mod[6 + c];
      EXPECT_NEAR(y.at(r, c), expect, 1e-12);
      mean += y.at(r, c) / 6;
      zg += z[c] * (1 + mod[c]) / 6;
    }
    EXPECT_NEAR(mean - zg, beta_mean, 1e-12);
  }
}

TEST(AdaLayerNorm, ConstantRowIsFinite) {
  Graph g(false);
  Tensor y = eval(ops::ada_layer_norm(g.constant(Tensor({1, 3}, 7.0)), g.constant(Tensor({1, 6})), 1));
  EXPECT_TRUE(y.all_finite());
  EXPECT_EQ(y.max_abs(), 0.0);
}

TEST(DepthwiseConv, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(6);
  Graph g(false);
  Tensor x = Tensor::randn({1, 5, 4, 3}, rng);
  Tensor k({3, 3, 3});
  for (int c = 0; c < 3; ++c) k[(1 * 3 + 1) * 3 + c] = 1;
  EXPECT_EQ(max_abs_diff(eval(ops::depthwise_conv2d(g.constant(x), g.constant(k))), x), 0.0);
}

TEST(DepthwiseConv, ImpulseResponse) {
  Graph g(false);
  Tensor x({1, 5, 5, 1});
  x[2 * 5 + 2] = 1;
  Tensor y = eval(ops::depthwise_conv2d(g.constant(x), g.constant(Tensor({3, 3, 1}, 1.0))));
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const bool inside = std::abs(i - 2) <= 1 && std::abs(j - 2) <= 1;
      EXPECT_EQ(y[i * 5 + j], inside ? 1.0 : 0.0);
    }
}

TEST(DepthwiseConv, MatchesDirectLoop) {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    Graph g(false);
    Tensor x = Tensor::randn({2, 6, 8, 4}, rng), k = Tensor::randn({3, 3, 4}, rng);
    Tensor y = eval(ops::depthwise_conv2d(g.constant(x), g.constant(k)));
    EXPECT_LT(max_abs_diff(y, oracle::depthwise_direct(x, k)), 1e-10);
  }
}

TEST(DepthwiseConv, ChannelMismatchThrows) {
  Graph g(false);
  EXPECT_THROW(ops::depthwise_conv2d(g.constant(Tensor({1, 3, 3, 2})), g.constant(Tensor({3, 3, 3}))),
               DimensionError);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(7);
  Graph g(false);
  Tensor x = Tensor::randn({1, 6, 7, 1}, rng);
  Tensor k({5, 5, 1, 1});
  k[2 * 5 + 2] = 1;
  EXPECT_EQ(max_abs_diff(eval(ops::conv2d(g.constant(x), g.constant(k))), x), 0.0);
}

TEST(Conv2d, ZeroKernelGivesZero) {
  std::mt19937_64 rng(8);
  Graph g(false);
  Tensor y = eval(ops::conv2d(g.constant(Tensor::randn({1, 4, 4, 3}, rng)), g.constant(Tensor({5, 5, 3, 1}))));
  EXPECT_EQ(y.shape(), (Shape{1, 4, 4, 1}));
  EXPECT_EQ(y.max_abs(), 0.0);
}

TEST(Conv2d, MatchesDirectLoop) {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    Graph g(false);
    const std::size_t ci = 1 + seed % 3, co = 1 + (seed * 2) % 4;
    Tensor x = Tensor::randn({2, 6, 5, ci}, rng), k = Tensor::randn({5, 5, ci, co}, rng);
    Tensor y = eval(ops::conv2d(g.constant(x), g.constant(k)));
    EXPECT_LT(max_abs_diff(y, oracle::conv2d_direct(x, k)), 1e-10);
    Tensor k3 = Tensor::randn({3, 3, ci, co}, rng);
    EXPECT_LT(max_abs_diff(eval(ops::conv2d(g.constant(x), g.constant(k3))), oracle::conv2d_direct(x, k3)), 1e-10);
  }
}

TEST(Conv2d, ChannelMismatchThrows) {
  Graph g(false);
  EXPECT_THROW(ops::conv2d(g.constant(Tensor({1, 3, 3, 2})), g.constant(Tensor({5, 5, 3, 1}))), DimensionError);
}

TEST(Attention, CausalRowsIgnoreFuture) {
  std::mt19937_64 rng(9);
  Tensor q = Tensor::randn({5, 4}, rng), k = Tensor::randn({5, 4}, rng), v = Tensor::randn({5, 4}, rng);
  const auto layout = AttentionLayout::contiguous(1, 5);
  Graph g(false);
  Tensor y0 = eval(ops::attention(g.constant(q), g.constant(k), g.constant(v), layout, 2, true));
  for (std::size_t c = 0; c < 4; ++c) {
    k.at(4, c) += 10;
    v.at(4, c) -= 3;
  }
  Tensor y1 = eval(ops::attention(g.constant(q), g.constant(k), g.constant(v), layout, 2, true));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y0.at(i, c), y1.at(i, c));
}

TEST(Attention, MatchesPerHeadSoftmax) {
  std::mt19937_64 rng(10);
  const std::size_t blocks = 2, gpb = 3, tokens = 4, d = 6, heads = 2, dh = 3;
  const auto layout = AttentionLayout::interleaved(blocks, gpb, tokens);
  const std::size_t rows = blocks * gpb * tokens;
  Tensor q = Tensor::randn({rows, d}, rng), k = Tensor::randn({rows, d}, rng), v = Tensor::randn({rows, d}, rng);
  Graph g(false);
  Tensor y = eval(ops::attention(g.constant(q), g.constant(k), g.constant(v), layout, heads, false));
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t gi = 0; gi < gpb; ++gi)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < tokens; ++i) {
          const std::size_t ri = b * gpb * tokens + i * gpb + gi;
          std::vector<double> logits, mask(tokens, 0.0);
          for (std::size_t j = 0; j < tokens; ++j) {
            const std::size_t rj = b * gpb * tokens + j * gpb + gi;
            double s = 0;
            for (std::size_t c = 0; c < dh; ++c) s += q.at(ri, h * dh + c) * k.at(rj, h * dh + c);
            logits.push_back(s / std::sqrt(static_cast<double>(dh)));
          }
          auto p = oracle::softmax_ld(logits, mask);
          for (std::size_t c = 0; c < dh; ++c) {
            long double o = 0;
            for (std::size_t j = 0; j < tokens; ++j) o += p[j] * v.at(b * gpb * tokens + j * gpb + gi, h * dh + c);
            EXPECT_NEAR(y.at(ri, h * dh + c), static_cast<double>(o), 1e-12);
          }
        }
}

TEST(Gelu, ExactErfForm) {
  Graph g(false);
  Tensor x({1, 3}, {-1.5, 0, 2});
  Tensor y = eval(ops::gelu(g.constant(x)));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], 0.5 * x[i] * (1 + std::erf(x[i] / std::sqrt(2.0))), 1e-15);
}

TEST(Graph, InferenceModeStillComputes) {
  Graph g(false);
  EXPECT_FALSE(g.recording());
  Tensor y = eval(ops::add(g.constant(Tensor({2}, 1.0)), g.constant(Tensor({2}, 2.0))));
  EXPECT_EQ(y[0], 3.0);
}

TEST(Graph, FrozenParameterPassesGradientThrough) {
  Parameter a(Tensor({1, 2}, {1, 2}));
  Parameter w(Tensor({2, 1}, {3, 4}));
  w.trainable = false;
  Graph g;
  Var y = ops::sum(ops::matmul(g.parameter(a), g.parameter(w)));
  g.backward(y);
  EXPECT_EQ(a.grad[0], 3.0);
  EXPECT_EQ(a.grad[1], 4.0);
  EXPECT_EQ(w.grad.max_abs(), 0.0);
}

TEST(KernelGradients, AllKernelsTwentySeeds) {
  for (const auto& c : testing::kernel_gradient_suite(20)) {
    EXPECT_LT(c.max_rel_error, 1e-4) << c.name;
    EXPECT_EQ(c.seeds, 20);
  }
}

}  // namespace
}  // namespace pfmce
