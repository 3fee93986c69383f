// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <vector>

#include "pfmce/core/graph.hpp"

namespace pfmce {

/// Floor applied to every variance before it is inverted.
inline constexpr Real kVarianceFloor = 1e-6;
/// Stand-in for -infinity in attention masks.
inline constexpr Real kMaskSentinel = -1e30;

/// Square mask with 0 where key j <= query m, kMaskSentinel elsewhere.
Tensor causal_mask(std::size_t n);

/// Maps (group g, token i) to a row of a [rows x d] token matrix.
///   row = (g / groups_per_block) * block_stride
///       + (g % groups_per_block) * group_stride + i * token_stride
struct AttentionLayout {
  std::size_t groups = 1;
  std::size_t tokens = 1;
  std::size_t groups_per_block = 1;
  std::size_t block_stride = 0;
  std::size_t group_stride = 1;
  std::size_t token_stride = 1;

  std::size_t row(std::size_t g, std::size_t i) const {
    return (g / groups_per_block) * block_stride + (g % groups_per_block) * group_stride + i * token_stride;
  }
  std::size_t rows() const { return groups * tokens; }

  /// Groups stored back to back: row = g * tokens + i.
  static AttentionLayout contiguous(std::size_t groups, std::size_t tokens);
  /// `blocks` stacked blocks, each holding `groups_per_block` interleaved
  /// groups: row = b * (gpb * tokens) + i * gpb + g_in_block.
  static AttentionLayout interleaved(std::size_t blocks, std::size_t groups_per_block, std::size_t tokens);
};

namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Real s);
/// x[..., c] + b[c]
Var add_bias(Var x, Var b);

/// a[m x k] * b[k x n]
Var matmul(Var a, Var b);
/// x[..., in] * w[in x out] + b[out]; pass an invalid Var to skip the bias.
Var linear(Var x, Var w, Var b = {});

Var gelu(Var x);
Var relu(Var x);

/// Per-row standardization over the last axis followed by gamma/beta.
Var layer_norm(Var x, Var gamma, Var beta, Real eps = kVarianceFloor);

/// Per-row standardization of x[G*rows_per_condition x c], then
/// y = xhat * (1 + mod[g, :c]) + mod[g, c:] for the row's group g.
/// mod has shape [G x 2c].
Var ada_layer_norm(Var x, Var modulation, std::size_t rows_per_condition, Real eps = kVarianceFloor);

/// Row-wise softmax of logits + mask (same shape, 2-D).
/// Entries with mask <= kMaskSentinel / 2 get exactly zero weight; a fully
/// masked row throws NumericError.
Var masked_softmax(Var logits, const Tensor& mask);

/// Scaled dot-product attention for every group of `layout`, `heads` heads
/// splitting the feature axis. q, k, v are [rows x d]; output is the
/// concatenation of head outputs (before any output projection).
Var attention(Var q, Var k, Var v, const AttentionLayout& layout, std::size_t heads, bool causal);

/// x[B,H,W,C] convolved per channel with kernels[kh,kw,C], zero "same"
/// padding, stride 1. Kernel extents must be odd.
Var depthwise_conv2d(Var x, Var kernels);

/// x[B,H,W,Cin] with kernels[kh,kw,Cin,Cout], zero "same" padding, stride 1.
Var conv2d(Var x, Var kernels);

Var reshape(Var x, Shape shape);
/// [n x p] ++ [n x q] -> [n x (p+q)]
Var concat_cols(Var a, Var b);
Var gather_rows(Var x, std::vector<std::size_t> rows);
/// y[r, :] = x[r, :] * scale[r] + shift[r] with constant per-row factors.
Var affine_rows(Var x, std::vector<Real> scale, std::vector<Real> shift);

Var sum(Var x);
Var sum_squares(Var x);
/// mean((a - b)^2) over all elements.
Var mse(Var a, Var b);

}  // namespace ops
}  // namespace pfmce
