// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/pfm/pfm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pfmce {

void PfmConfig::validate() const {
  if (layers == 0 || d == 0 || heads == 0 || patch == 0 || context == 0 || horizon == 0)
    throw DimensionError("pfm config: all sizes must be positive");
  if (d % heads != 0)
    throw DimensionError("pfm config: d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(heads));
}

PfmConfig PfmConfig::desk(std::size_t t) {
  PfmConfig c;
  c.d = 128;
  c.heads = 4;
  c.context = c.horizon = t;
  return c;
}

SequenceStats sequence_stats(std::span<const Real> x, Real eps) {
  Real mean = 0;
  for (Real v : x) mean += v;
  mean /= static_cast<Real>(x.size());
  Real var = 0;
  for (Real v : x) var += (v - mean) * (v - mean);
  var /= static_cast<Real>(x.size());
  return {mean, std::sqrt(std::max(var, eps))};
}

PatchBatch preprocess(const Tensor& z, const PfmConfig& cfg) {
  if (z.rank() != 2 || z.dim(1) != cfg.context)
    throw DimensionError("pfm input must be [S x " + std::to_string(cfg.context) + "]");
  const std::size_t s = z.dim(0), t = z.dim(1), len = cfg.padded_length();
  PatchBatch b;
  b.sequences = s;
  b.n_pat = cfg.patches();
  b.pad = len - t;
  b.patches = Tensor({s * b.n_pat, cfg.patch});
  b.stats.resize(s);
  for (std::size_t i = 0; i < s; ++i) {
    const auto row = z.values().subspan(i * t, t);
    const auto st = sequence_stats(row);
    b.stats[i] = st;
    // Row i of the patch matrix block is the padded sequence laid out flat.
    Real* dst = b.patches.data() + i * len + b.pad;
    for (std::size_t j = 0; j < t; ++j) dst[j] = (row[j] - st.mean) / st.std;
  }
  return b;
}

Tensor denormalize(const Tensor& normalized, const std::vector<SequenceStats>& stats) {
  Tensor out = normalized;
  const std::size_t w = normalized.dim(1);
  for (std::size_t i = 0; i < stats.size(); ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = normalized[i * w + j] * stats[i].std + stats[i].mean;
  return out;
}

Pfm::Pfm(const PfmConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg.validate();
  in_res = ResidualBlock(cfg.patch, cfg.d, cfg.d, rng);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    Layer l;
    l.ln1 = LayerNorm(cfg.d);
    l.ln2 = LayerNorm(cfg.d);
    l.attn = MultiHeadAttention(cfg.d, cfg.heads, rng);
    l.ffn1 = Linear(cfg.d, cfg.ffn_width(), rng);
    l.ffn2 = Linear(cfg.ffn_width(), cfg.d, rng);
    layers.push_back(std::move(l));
  }
  out_res = ResidualBlock(cfg.d, cfg.d, cfg.horizon, rng);
}

Var Pfm::input_project(Graph& g, const PatchBatch& batch) {
  const Tensor pe = sinusoidal_encoding(batch.n_pat, cfg_.d);
  Tensor tiled({batch.sequences * batch.n_pat, cfg_.d});
  for (std::size_t s = 0; s < batch.sequences; ++s)
    std::copy(pe.values().begin(), pe.values().end(), tiled.data() + s * pe.size());
  return ops::add(in_res(g, g.constant(batch.patches)), g.constant(std::move(tiled)));
}

Var Pfm::backbone(Graph& g, Var e, std::size_t sequences, std::size_t n_pat) {
  const auto layout = AttentionLayout::contiguous(sequences, n_pat);
  Var x = e;
  for (auto& l : layers) {
    x = ops::add(x, l.attn(g, l.ln1(g, x), layout, causal));
    x = ops::add(x, l.ffn2(g, ops::gelu(l.ffn1(g, l.ln2(g, x)))));
  }
  return x;
}

Var Pfm::last_states(Var u, std::size_t sequences, std::size_t n_pat) {
  if (n_pat == 1) return u;
  std::vector<std::size_t> rows(sequences);
  for (std::size_t s = 0; s < sequences; ++s) rows[s] = s * n_pat + n_pat - 1;
  return ops::gather_rows(u, std::move(rows));
}

Var Pfm::head(Graph& g, Var u_last) { return out_res(g, u_last); }

PfmOutput Pfm::forward(Graph& g, const Tensor& z_his) {
  const PatchBatch batch = preprocess(z_his, cfg_);
  PfmOutput out;
  out.states = backbone(g, input_project(g, batch), batch.sequences, batch.n_pat);
  out.last = last_states(out.states, batch.sequences, batch.n_pat);
  out.normalized = head(g, out.last);
  std::vector<Real> sc(batch.sequences), sh(batch.sequences);
  for (std::size_t i = 0; i < batch.sequences; ++i) {
    sc[i] = batch.stats[i].std;
    sh[i] = batch.stats[i].mean;
  }
  out.prediction = ops::affine_rows(out.normalized, std::move(sc), std::move(sh));
  out.stats = batch.stats;
  return out;
}

std::pair<Tensor, Tensor> Pfm::predict(const Tensor& z_his) {
  Graph g(false);
  auto out = forward(g, z_his);
  return {out.prediction.value(), out.last.value()};
}

void Pfm::collect(NamedParameters& out) {
  in_res.collect(out, "pfm/in_res");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "pfm/layer" + std::to_string(i);
    auto& l = layers[i];
    l.attn.collect(out, p);
    l.ffn1.collect(out, p + "/ffn1");
    l.ffn2.collect(out, p + "/ffn2");
    l.ln1.collect(out, p + "/ln1");
    l.ln2.collect(out, p + "/ln2");
  }
  out_res.collect(out, "pfm/out_res");
}

}  // namespace pfmce
