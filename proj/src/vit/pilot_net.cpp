// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/vit/pilot_net.hpp"

#include <algorithm>
#include <cmath>

#include "pfmce/classical/classical.hpp"

namespace pfmce {

std::string norm_mode_name(NormMode m) {
  switch (m) {
    case NormMode::Ada: return "ada";
    case NormMode::PlainLn: return "ln";
    case NormMode::None: return "none";
  }
  return "?";
}

NormMode parse_norm_mode(const std::string& name) {
  if (name == "ada") return NormMode::Ada;
  if (name == "ln") return NormMode::PlainLn;
  if (name == "none") return NormMode::None;
  throw std::invalid_argument("unknown norm mode '" + name + "' (ada, ln, none)");
}

void VitConfig::validate() const {
  if (layers == 0 || heads == 0 || d_m == 0 || ffn == 0 || r_t == 0 || r_f == 0 || channels == 0 || cond_hidden == 0)
    throw DimensionError("vit config: all sizes must be positive");
  if (d_m % heads != 0)
    throw DimensionError("vit config: d_m=" + std::to_string(d_m) + " not divisible by heads=" +
                         std::to_string(heads));
}

VitConfig VitConfig::desk() {
  VitConfig c;
  c.layers = 2;
  c.d_m = 32;
  c.ffn = 64;
  c.channels = 16;
  return c;
}

Tensor prepare_features(const Tensor& coarse, const GridShape& grid, std::size_t r_t, std::size_t r_f) {
  if (coarse.rank() != 2 || coarse.dim(0) != grid.tokens())
    throw DimensionError("pilot features: expected " + std::to_string(grid.tokens()) + " token rows");
  const std::size_t t = coarse.dim(1);
  if (t % r_t != 0) throw DimensionError("pilot features: T=" + std::to_string(t) + " not divisible by R_T");
  if (grid.k % r_f != 0) throw DimensionError("pilot features: K=" + std::to_string(grid.k) + " not divisible by R_F");
  const Tensor ds = despread(coarse.reshaped({grid.batch * grid.width, grid.k, t}), r_t, r_f);
  const std::size_t tb = t / r_t, lf = t + tb;
  Tensor a({grid.tokens(), lf});
  for (std::size_t r = 0; r < grid.tokens(); ++r) {
    std::copy_n(coarse.data() + r * t, t, a.data() + r * lf);
    std::copy_n(ds.data() + r * tb, tb, a.data() + r * lf + t);
  }
  return a;
}

Tensor noise_condition(const std::vector<Real>& noise_vars) {
  Tensor c({noise_vars.size(), 1});
  for (std::size_t i = 0; i < noise_vars.size(); ++i) c[i] = std::log(noise_vars[i] + 1e-12);
  return c;
}

Var PilotNet::Norm::operator()(Graph& g, Var x, Var condition, std::size_t rows_per_condition) {
  switch (mode) {
    case NormMode::Ada: return ada(g, x, condition, rows_per_condition);
    case NormMode::PlainLn: return plain(g, x);
    case NormMode::None: return x;
  }
  return x;
}

void PilotNet::Norm::collect(NamedParameters& out, const std::string& prefix) {
  if (mode == NormMode::Ada) ada.collect(out, prefix);
  if (mode == NormMode::PlainLn) plain.collect(out, prefix);
}

namespace {

PilotNet::Norm make_norm(NormMode mode, std::size_t width, std::size_t hidden, std::mt19937_64& rng) {
  PilotNet::Norm n;
  n.mode = mode;
  if (mode == NormMode::Ada) n.ada = AdaLayerNorm(width, rng, hidden);
  if (mode == NormMode::PlainLn) n.plain = LayerNorm(width);
  return n;
}

}  // namespace

PilotNet::PilotNet(const VitConfig& cfg, std::size_t t, std::mt19937_64& rng) : cfg_(cfg), t_(t) {
  cfg.validate();
  if (t % cfg.r_t != 0) throw DimensionError("pilot net: T not divisible by R_T");
  embedding = Linear(cfg.feature_length(t), cfg.d_m, rng);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    Layer l;
    l.ln = LayerNorm(cfg.d_m);
    l.attn = MultiHeadAttention(cfg.d_m, cfg.heads, rng);
    l.lin1 = Linear(cfg.d_m, cfg.ffn, rng);
    l.dw = Parameter(Tensor::randn({3, 3, cfg.ffn}, rng, 1.0 / 3.0));
    l.lin2 = Linear(cfg.ffn, cfg.d_m, rng);
    l.norm1 = make_norm(cfg.norm, cfg.ffn, cfg.cond_hidden, rng);
    l.norm2 = make_norm(cfg.norm, cfg.ffn, cfg.cond_hidden, rng);
    l.norm3 = make_norm(cfg.norm, cfg.d_m, cfg.cond_hidden, rng);
    layers.push_back(std::move(l));
  }
  dec.conv_in = Conv2d(5, cfg.d_m, cfg.channels, rng);
  for (auto& blk : dec.res)
    for (auto& c : blk) c = Conv2d(5, cfg.channels, cfg.channels, rng);
  dec.dense = Linear(cfg.channels, t, rng);
  dec.conv_out = Conv2d(5, 1, 1, rng);
  dec.conv_out.kernel.value.fill(0);
  if (!cfg.coarse_skip) dec.conv_out.kernel.value[2 * 5 + 2] = 1;
}

Var PilotNet::embed(Graph& g, const Tensor& features) { return embedding(g, g.constant(features)); }

Var PilotNet::attention_block(Graph& g, std::size_t i, Var x, const GridShape& grid) {
  if (!attention_enabled) return x;
  auto& l = layers.at(i);
  // One attention group per (record, subcarrier) over its 2 n_t antenna rows.
  const auto layout = AttentionLayout::interleaved(grid.batch, grid.k, grid.width);
  return ops::add(x, l.attn(g, l.ln(g, x), layout, false));
}

Var PilotNet::ffn_block(Graph& g, std::size_t i, Var r_e, Var condition, const GridShape& grid) {
  if (!ffn_enabled) return r_e;
  auto& l = layers.at(i);
  const std::size_t rpc = grid.per_record();
  Var h = ops::gelu(l.norm1(g, l.lin1(g, r_e), condition, rpc));
  h = ops::reshape(h, {grid.batch, grid.width, grid.k, cfg_.ffn});
  h = ops::depthwise_conv2d(h, g.parameter(l.dw));
  h = ops::reshape(h, {grid.tokens(), cfg_.ffn});
  h = ops::gelu(l.norm2(g, h, condition, rpc));
  return ops::add(l.norm3(g, l.lin2(g, h), condition, rpc), r_e);
}

Var PilotNet::encoder(Graph& g, Var tokens, Var condition, const GridShape& grid) {
  const Tensor pe = sinusoidal_encoding(grid.width, cfg_.d_m);
  Tensor tiled({grid.tokens(), cfg_.d_m});
  for (std::size_t b = 0; b < grid.batch; ++b)
    for (std::size_t w = 0; w < grid.width; ++w)
      for (std::size_t k = 0; k < grid.k; ++k)
        std::copy_n(pe.data() + w * cfg_.d_m, cfg_.d_m, tiled.data() + ((b * grid.width + w) * grid.k + k) * cfg_.d_m);
  Var x = ops::add(tokens, g.constant(std::move(tiled)));
  for (std::size_t i = 0; i < layers.size(); ++i) x = ffn_block(g, i, attention_block(g, i, x, grid), condition, grid);
  return x;
}

Var PilotNet::decoder(Graph& g, Var r, const GridShape& grid) {
  Var x = ops::reshape(r, {grid.batch, grid.width, grid.k, cfg_.d_m});
  x = dec.conv_in(g, x);
  for (auto& blk : dec.res) x = ops::add(x, blk[1](g, ops::relu(blk[0](g, x))));
  x = ops::reshape(x, {grid.tokens(), cfg_.channels});
  x = dec.dense(g, x);
  x = dec.conv_out(g, ops::reshape(x, {grid.batch * grid.width, grid.k, t_, 1}));
  return ops::reshape(x, {grid.tokens(), t_});
}

PilotNetOutput PilotNet::forward(Graph& g, const Tensor& coarse, const std::vector<Real>& noise_vars,
                                 const GridShape& grid) {
  if (noise_vars.size() != grid.batch) throw DimensionError("pilot net: one noise variance per record");
  if (coarse.dim(1) != t_) throw DimensionError("pilot net: input T does not match the network");
  Var cond = g.constant(noise_condition(noise_vars));
  PilotNetOutput out;
  out.states = encoder(g, embed(g, prepare_features(coarse, grid, cfg_.r_t, cfg_.r_f)), cond, grid);
  out.estimate = decoder(g, out.states, grid);
  if (cfg_.coarse_skip) out.estimate = ops::add(out.estimate, g.constant(coarse));
  return out;
}

void PilotNet::collect(NamedParameters& out) {
  embedding.collect(out, "vit/embed");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "vit/layer" + std::to_string(i);
    auto& l = layers[i];
    l.ln.collect(out, p + "/ln");
    l.attn.collect(out, p);
    l.lin1.collect(out, p + "/lin1");
    out.emplace_back(p + "/dw", &l.dw);
    l.lin2.collect(out, p + "/lin2");
    l.norm1.collect(out, p + "/norm1");
    l.norm2.collect(out, p + "/norm2");
    l.norm3.collect(out, p + "/norm3");
  }
  dec.conv_in.collect(out, "vit/decoder/conv_in");
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 2; ++c)
      dec.res[b][c].collect(out, "vit/decoder/res" + std::to_string(b) + "_" + std::to_string(c));
  dec.dense.collect(out, "vit/decoder/dense");
  dec.conv_out.collect(out, "vit/decoder/conv_out");
}

}  // namespace pfmce
