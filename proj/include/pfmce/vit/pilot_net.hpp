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
#include <vector>

#include "pfmce/core/layers.hpp"

namespace pfmce {

enum class NormMode : std::uint8_t { Ada = 0, PlainLn = 1, None = 2 };

std::string norm_mode_name(NormMode m);
NormMode parse_norm_mode(const std::string& name);

struct VitConfig {
  std::size_t layers = 10;
  std::size_t heads = 4;
  std::size_t d_m = 128;
  std::size_t ffn = 256;
  std::size_t r_t = 2;
  std::size_t r_f = 6;
  std::size_t channels = 32;
  std::size_t cond_hidden = 16;
  NormMode norm = NormMode::Ada;
  /// z_p = coarse + decoder output; the final conv then starts at zero so
  /// an untrained net returns its input.
  bool coarse_skip = false;

  std::size_t feature_length(std::size_t t) const { return t + t / r_t; }
  void validate() const;

  /// Two layers, d_m = 32, 64-wide FFN, 16 decoder channels.
  static VitConfig desk();
};

/// Token grid of a batch: `batch` records, each with width = 2 n_t antenna
/// rows of k subcarriers. Token rows are ordered (b, w, k), the same order
/// as the rows of a real-stacked channel matrix.
struct GridShape {
  std::size_t batch = 1;
  std::size_t width = 2;
  std::size_t k = 1;

  std::size_t tokens() const { return batch * width * k; }
  std::size_t per_record() const { return width * k; }
};

/// coarse[B * 2n_t * K, T] -> A[B * 2n_t * K, T + T / r_t]: each token row is
/// its own time series followed by the despread series of its tile.
Tensor prepare_features(const Tensor& coarse, const GridShape& grid, std::size_t r_t, std::size_t r_f);

/// AdaLN input: ln(sigma^2 + 1e-12) per record, as [B x 1].
Tensor noise_condition(const std::vector<Real>& noise_vars);

struct PilotNetOutput {
  Var estimate;  // z_p, [tokens x T]
  Var states;    // R, [tokens x d_m]
};

/// Pilot-processing ViT: per-subcarrier attention over antenna tokens, an
/// enhanced FFN on the (antenna, subcarrier) grid, convolutional decoder.
class PilotNet {
 public:
  PilotNet() = default;
  PilotNet(const VitConfig& cfg, std::size_t t, std::mt19937_64& rng);

  const VitConfig& config() const { return cfg_; }
  std::size_t horizon() const { return t_; }

  /// Linear patch embedding of prepared features.
  Var embed(Graph& g, const Tensor& features);
  Var encoder(Graph& g, Var tokens, Var condition, const GridShape& grid);
  /// Attention module of one layer: x + MHA(LN(x)).
  Var attention_block(Graph& g, std::size_t layer, Var x, const GridShape& grid);
  /// Enhanced FFN of one layer; adds its input back.
  Var ffn_block(Graph& g, std::size_t layer, Var r_e, Var condition, const GridShape& grid);
  Var decoder(Graph& g, Var r, const GridShape& grid);

  PilotNetOutput forward(Graph& g, const Tensor& coarse, const std::vector<Real>& noise_vars,
                         const GridShape& grid);

  void collect(NamedParameters& out);

  /// Switches for locality tests.
  bool attention_enabled = true;
  bool ffn_enabled = true;

  /// One normalization site; which member is used depends on the mode.
  struct Norm {
    NormMode mode = NormMode::Ada;
    AdaLayerNorm ada;
    LayerNorm plain;
    Var operator()(Graph& g, Var x, Var condition, std::size_t rows_per_condition);
    void collect(NamedParameters& out, const std::string& prefix);
  };

  struct Layer {
    LayerNorm ln;
    MultiHeadAttention attn;
    Linear lin1, lin2;
    Parameter dw;  // [3, 3, ffn]
    Norm norm1, norm2, norm3;
  };

  struct Decoder {
    Conv2d conv_in;
    Conv2d res[2][2];
    Linear dense;
    Conv2d conv_out;  // 1 -> 1 over the (subcarrier, time) plane
  };

  Linear embedding;
  std::vector<Layer> layers;
  Decoder dec;

 private:
  VitConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace pfmce
