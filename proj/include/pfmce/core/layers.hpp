// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <random>
#include <string>

#include "pfmce/core/ops.hpp"

namespace pfmce {

// Parameterized building blocks shared by the networks. Each block exposes
// collect(), which appends "<prefix>/<name>" entries for its parameters.

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool bias = true);

  Var operator()(Graph& g, Var x);
  void collect(NamedParameters& out, const std::string& prefix);
  void zero();

  std::size_t in() const { return weight.value.dim(0); }
  std::size_t out() const { return weight.value.dim(1); }

  Parameter weight;
  Parameter bias;
  bool has_bias = true;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);

  Var operator()(Graph& g, Var x);
  void collect(NamedParameters& out, const std::string& prefix);

  Parameter gamma;
  Parameter beta;
};

/// Layer norm whose per-channel scale and shift come from a small network
/// of a scalar condition: cond -> dense(hidden) -> GELU -> dense(2c), split
/// into (gamma - 1, beta). The last dense starts at zero, so a fresh layer
/// is plain standardization.
class AdaLayerNorm {
 public:
  AdaLayerNorm() = default;
  AdaLayerNorm(std::size_t width, std::mt19937_64& rng, std::size_t hidden = 16);

  /// x has G * rows_per_condition rows; condition is [G x 1].
  Var operator()(Graph& g, Var x, Var condition, std::size_t rows_per_condition);
  void collect(NamedParameters& out, const std::string& prefix);

  std::size_t width = 0;
  Linear hidden;
  Linear modulation;
};

/// dense(in -> hidden) -> GELU -> dense(hidden -> out), plus a linear skip
/// projection when in != out (identity skip otherwise).
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng);

  Var operator()(Graph& g, Var x);
  void collect(NamedParameters& out, const std::string& prefix);
  /// Zero every weight and bias (the block then maps everything to 0).
  void zero();

  std::size_t in() const { return fc1.in(); }
  std::size_t out() const { return fc2.out(); }
  bool has_skip() const { return use_skip; }

  Linear fc1;
  Linear fc2;
  Linear skip;
  bool use_skip = false;
};

/// Multi-head self-attention with bias-free Q/K/V/O projections.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t width, std::size_t heads, std::mt19937_64& rng);

  Var operator()(Graph& g, Var x, const AttentionLayout& layout, bool causal);
  void collect(NamedParameters& out, const std::string& prefix);

  std::size_t heads = 1;
  Linear wq, wk, wv, wo;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t kernel, std::size_t in, std::size_t out, std::mt19937_64& rng);

  /// x[B,H,W,in] -> [B,H,W,out]
  Var operator()(Graph& g, Var x);
  void collect(NamedParameters& out, const std::string& prefix);

  Parameter kernel;
  Parameter bias;
};

/// Sinusoidal encoding: row p, column 2i -> sin(p / 10000^(2i/d)),
/// column 2i+1 -> cos(p / 10000^(2i/d)).
Tensor sinusoidal_encoding(std::size_t positions, std::size_t width);

}  // namespace pfmce
