// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/estimator/estimator.hpp"

#include <stdexcept>

#include "pfmce/estimator/metrics.hpp"

namespace pfmce {

void ModelConfig::validate() const {
  if (n_t == 0 || k == 0 || t == 0) throw DimensionError("model config: empty grid");
  pfm.validate();
  vit.validate();
  if (pfm.context != t || pfm.horizon != t)
    throw DimensionError("model config: pfm context/horizon must equal T=" + std::to_string(t));
}

ModelConfig ModelConfig::desk(std::size_t n_t, std::size_t k, std::size_t t) {
  ModelConfig c;
  c.n_t = n_t;
  c.k = k;
  c.t = t;
  c.pfm = PfmConfig::desk(t);
  c.vit = VitConfig::desk();
  return c;
}

FusionHead::FusionHead(std::size_t d_, std::size_t d_m_, std::size_t t, std::mt19937_64& rng)
    : d(d_), d_m(d_m_), block(d_ + d_m_, d_, t, rng) {}

Var FusionHead::operator()(Graph& g, Var u, Var r) { return block(g, ops::concat_cols(u, r)); }

void FusionHead::collect(NamedParameters& out) { block.collect(out, "fusion"); }

namespace {

// dst[(d + d_m) x n] <- [src; 0]
void widen(Tensor& dst, const Tensor& src) {
  dst.fill(0);
  std::copy(src.values().begin(), src.values().end(), dst.data());
}

}  // namespace

void FusionHead::warm_start(const ResidualBlock& pfm_out) {
  if (pfm_out.in() != d || pfm_out.out() != block.out() || pfm_out.fc1.out() != block.fc1.out() ||
      !pfm_out.has_skip())
    throw DimensionError("fusion warm start: output block shape differs");
  widen(block.fc1.weight.value, pfm_out.fc1.weight.value);
  block.fc1.bias.value = pfm_out.fc1.bias.value;
  block.fc2.weight.value = pfm_out.fc2.weight.value;
  block.fc2.bias.value = pfm_out.fc2.bias.value;
  widen(block.skip.weight.value, pfm_out.skip.weight.value);
  block.skip.bias.value = pfm_out.skip.bias.value;
}

void FusionHead::zero_output() {
  block.fc2.weight.value.fill(0);
  block.fc2.bias.value.fill(0);
  block.skip.weight.value.fill(0);
  block.skip.bias.value.fill(0);
}

Var fuse(Graph& g, FusionHead& head, Var u, Var r) {
  if (u.shape().at(0) != r.shape().at(0))
    throw DimensionError("fuse: U' has " + std::to_string(u.shape()[0]) + " rows, R has " +
                         std::to_string(r.shape()[0]));
  return head(g, u, r);
}

PfmCe::PfmCe(const ModelConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg.validate();
  pfm = Pfm(cfg.pfm, rng);
  vit = PilotNet(cfg.vit, cfg.t, rng);
  fusion = FusionHead(cfg.pfm.d, cfg.vit.d_m, cfg.t, rng);
  init_fusion();
}

void PfmCe::init_fusion() {
  if (cfg_.vit.coarse_skip)
    fusion.zero_output();
  else
    fusion.warm_start(pfm.out_res);
}

PfmCe::Output PfmCe::forward_fused(Graph& g, const Tensor& coarse, const Tensor& history,
                                   const std::vector<Real>& noise_vars, bool decode_pilot) {
  const auto grid = cfg_.grid(noise_vars.size());
  if (history.rank() != 2 || history.dim(0) != grid.tokens())
    throw DimensionError("estimator: history must be [B*Q x T]");
  if (coarse.dim(1) != cfg_.t) throw DimensionError("estimator: coarse input T does not match the network");
  auto p = pfm.forward(g, history);
  Output out;
  Var r;
  if (decode_pilot) {
    auto v = vit.forward(g, coarse, noise_vars, grid);
    out.pilot = v.estimate;
    r = v.states;
  } else {
    Var cond = g.constant(noise_condition(noise_vars));
    r = vit.encoder(g, vit.embed(g, prepare_features(coarse, grid, cfg_.vit.r_t, cfg_.vit.r_f)), cond, grid);
  }
  Var z = fuse(g, fusion, p.last, r);
  if (cfg_.fusion_denormalize) {
    std::vector<Real> sc(p.stats.size()), sh(p.stats.size());
    for (std::size_t i = 0; i < p.stats.size(); ++i) {
      sc[i] = p.stats[i].std;
      sh[i] = cfg_.vit.coarse_skip ? 0 : p.stats[i].mean;
    }
    z = ops::affine_rows(z, std::move(sc), std::move(sh));
  }
  if (cfg_.vit.coarse_skip) z = ops::add(z, g.constant(coarse));
  out.estimate = z;
  return out;
}

PfmCe::Output PfmCe::forward_pilot(Graph& g, const Tensor& coarse, const std::vector<Real>& noise_vars) {
  auto v = vit.forward(g, coarse, noise_vars, cfg_.grid(noise_vars.size()));
  return {v.estimate, v.estimate};
}

void PfmCe::collect(NamedParameters& out) {
  pfm.collect(out);
  vit.collect(out);
  fusion.collect(out);
}

Tensor estimate_slot(PfmCe& model, const SlotContext& ctx) {
  if (ctx.index == 0) throw std::invalid_argument("estimate_slot: slots are numbered from 1");
  if (ctx.index >= 2 && !ctx.history) throw std::invalid_argument("estimate_slot: slot >= 2 needs a history");
  Graph g(false);
  const std::vector<Real> nv{ctx.noise_var};
  if (ctx.index == 1) return model.forward_pilot(g, ctx.coarse, nv).estimate.value();
  return model.forward_fused(g, ctx.coarse, *ctx.history, nv).estimate.value();
}

Tensor coarse_input(const PilotObservation& obs, const PilotPattern& pattern, Interpolation interp,
                    const CovarianceBank& bank, const std::string& bucket) {
  return coarse_estimate(obs, pattern, interp, bank, bucket).stacked();
}

TrajectoryResult run_trajectory(PfmCe& model, const std::vector<SlotInput>& slots, const PilotPattern& pattern,
                                const CovarianceBank& bank, const std::string& bucket, Interpolation interp) {
  if (slots.empty()) throw std::invalid_argument("run_trajectory: no slots");
  TrajectoryResult res;
  std::optional<Tensor> history;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    SlotContext ctx;
    ctx.index = i + 1;
    ctx.history = std::move(history);
    ctx.coarse = coarse_input(slots[i].observation, pattern, interp, bank, bucket);
    ctx.noise_var = slots[i].observation.noise_var;
    Tensor est = estimate_slot(model, ctx);
    if (slots[i].truth) res.nmse.push_back(nmse(est, slots[i].truth->stacked()));
    history = est;
    res.estimates.push_back(std::move(est));
  }
  return res;
}

}  // namespace pfmce
