// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <random>
#include <vector>

#include "pfmce/core/layers.hpp"

namespace pfmce {

struct PfmConfig {
  std::size_t layers = 2;
  std::size_t d = 1280;
  std::size_t heads = 16;
  std::size_t patch = 32;
  std::size_t ffn = 0;  // 0 -> 4 d
  std::size_t context = 14;
  std::size_t horizon = 14;

  std::size_t ffn_width() const { return ffn ? ffn : 4 * d; }
  std::size_t padded_length() const { return (context + patch - 1) / patch * patch; }
  std::size_t patches() const { return padded_length() / patch; }
  void validate() const;

  /// d = 128, 4 heads, two layers.
  static PfmConfig desk(std::size_t t = 14);
};

struct SequenceStats {
  Real mean = 0;
  Real std = 1;
};

/// Standardized, left-zero-padded, patched sequences.
struct PatchBatch {
  std::size_t sequences = 0;
  std::size_t n_pat = 0;
  std::size_t pad = 0;       // zeros prepended to each sequence
  Tensor patches;            // [sequences * n_pat, patch], sequence-major
  std::vector<SequenceStats> stats;
};

SequenceStats sequence_stats(std::span<const Real> x, Real eps = kVarianceFloor);
/// z[S x T] -> S independent standardized sequences cut into patches.
PatchBatch preprocess(const Tensor& z, const PfmConfig& cfg);
/// Inverse of the standardization, row by row: x * std + mean.
Tensor denormalize(const Tensor& normalized, const std::vector<SequenceStats>& stats);

struct PfmOutput {
  Var prediction;  // [S x horizon], denormalized
  Var normalized;  // [S x horizon], before denormalization
  Var states;      // U, [S * n_pat x d]
  Var last;        // U', [S x d]
  std::vector<SequenceStats> stats;
};

/// Decoder-only causal transformer over the patches of each sequence,
/// predicting the next `horizon` points from the last patch state.
class Pfm {
 public:
  Pfm() = default;
  Pfm(const PfmConfig& cfg, std::mt19937_64& rng);

  const PfmConfig& config() const { return cfg_; }

  /// Residual projection of each patch plus the sinusoidal patch-index code.
  Var input_project(Graph& g, const PatchBatch& batch);
  /// All patch states U for `sequences` sequences of `n_pat` tokens.
  Var backbone(Graph& g, Var e, std::size_t sequences, std::size_t n_pat);
  /// Rows n_pat-1, 2 n_pat-1, ... of U.
  static Var last_states(Var u, std::size_t sequences, std::size_t n_pat);
  /// Output block on the last states; normalized prediction [S x horizon].
  Var head(Graph& g, Var u_last);

  PfmOutput forward(Graph& g, const Tensor& z_his);
  /// Inference-only prediction and U'.
  std::pair<Tensor, Tensor> predict(const Tensor& z_his);

  void collect(NamedParameters& out);

  /// Disables the attention mask; for tests only.
  bool causal = true;

  struct Layer {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    Linear ffn1, ffn2;
  };
  ResidualBlock in_res;
  std::vector<Layer> layers;
  ResidualBlock out_res;

 private:
  PfmConfig cfg_;
};

}  // namespace pfmce
