// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

#include "pfmce/core/parallel.hpp"
#include "pfmce/estimator/metrics.hpp"

namespace pfmce {

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Adapt: return "adapt";
    case Stage::Phase1: return "phase1";
    case Stage::Phase2: return "phase2";
    case Stage::Vit: return "vit";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : {Stage::Adapt, Stage::Phase1, Stage::Phase2, Stage::Vit})
    if (stage_name(s) == name) return s;
  throw std::invalid_argument("unknown stage '" + name + "' (adapt, phase1, phase2, vit)");
}

std::optional<Stage> predecessor(Stage s) {
  if (s == Stage::Phase1) return Stage::Adapt;
  if (s == Stage::Phase2) return Stage::Phase1;
  return std::nullopt;
}

TrainConfig TrainConfig::defaults(Stage s) {
  TrainConfig c;
  c.stage = s;
  if (s == Stage::Phase2) {
    c.learning_rate = 1e-4;
    c.weight_decay = 1e-4;
  }
  return c;
}

void TrainConfig::validate() const {
  if (batch == 0) throw std::invalid_argument("train: batch must be positive");
  if (records_per_trajectory == 0) throw std::invalid_argument("train: records_per_trajectory must be positive");
  if (!(learning_rate > 0) || !(weight_decay >= 0)) throw std::invalid_argument("train: bad learning rate or decay");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw std::invalid_argument("train: val_fraction must be in [0, 1)");
}

void LossReport::write_csv(std::ostream& os) const {
  os << (stage == Stage::Adapt ? "epoch,l_pfm,val_nmse_db\n" : "epoch,l_main,l_aux,l_tot,val_nmse_db\n");
  os << std::setprecision(6);
  for (const auto& e : epochs) {
    os << e.epoch << ',';
    if (stage == Stage::Adapt)
      os << e.l_pfm;
    else
      os << e.l_main << ',' << e.l_aux << ',' << e.l_tot;
    os << ',' << e.val_nmse_db << '\n';
  }
}

Split split_by_trajectory(std::size_t records, std::size_t per, Real val_fraction, std::uint64_t seed) {
  if (per == 0 || records % per != 0)
    throw std::invalid_argument("split: " + std::to_string(records) + " records are not whole trajectories of " +
                                std::to_string(per));
  const std::size_t n = records / per;
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0x5b11));
  std::shuffle(ids.begin(), ids.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<Real>(n)));
  if (val_fraction > 0 && n_val == 0 && n > 1) n_val = 1;
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[ids[i]] = true;
  Split s;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t r = 0; r < per; ++r) (is_val[j] ? s.val : s.train).push_back(j * per + r);
  return s;
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> idx) {
  const auto& h = ds.header;
  const std::size_t q = 2 * h.n_t * h.k, t = h.t, per = q * t;
  Batch b;
  b.coarse = Tensor({idx.size() * q, t});
  b.history = Tensor({idx.size() * q, t});
  b.truth = Tensor({idx.size() * q, t});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& r = ds.records.at(idx[i]);
    std::copy(r.coarse.begin(), r.coarse.end(), b.coarse.data() + i * per);
    std::copy(r.history.begin(), r.history.end(), b.history.data() + i * per);
    std::copy(r.truth.begin(), r.truth.end(), b.truth.data() + i * per);
    b.noise_vars.push_back(r.noise_var());
  }
  return b;
}

NamedParameters stage_parameters(PfmCe& model, Stage s) {
  NamedParameters all;
  model.collect(all);
  NamedParameters out;
  for (auto& [name, p] : all) {
    const bool pfm = name.rfind("pfm/", 0) == 0, vit = name.rfind("vit/", 0) == 0;
    bool on = false;
    switch (s) {
      case Stage::Adapt: on = pfm; break;
      case Stage::Vit: on = vit; break;
      // The output block is superseded by the fusion head from phase 1 on.
      case Stage::Phase1: on = name.rfind("pfm/out_res", 0) != 0; break;
      case Stage::Phase2: on = name.rfind("pfm/out_res", 0) != 0 && name.rfind(kBackbonePrefix, 0) != 0; break;
    }
    p->trainable = on;
    if (on) out.emplace_back(name, p);
  }
  return out;
}

namespace {

struct StepLoss {
  Var objective;
  Real pfm = 0, main = 0, aux = 0;
};

using StepFn = std::function<StepLoss(Graph&, const Batch&)>;

Tensor stage_output(PfmCe& model, Stage s, const Batch& b) {
  Graph g(false);
  switch (s) {
    case Stage::Adapt: return model.pfm.forward(g, b.history).prediction.value();
    case Stage::Vit:
      return model.vit.forward(g, b.coarse, b.noise_vars, model.config().grid(b.noise_vars.size())).estimate.value();
    default: return model.forward_fused(g, b.coarse, b.history, b.noise_vars).estimate.value();
  }
}

LossReport run_stage(PfmCe& model, Stage s, const NamedParameters& params, const StepFn& step, const Dataset& ds,
                     const TrainConfig& cfg) {
  cfg.validate();
  const Split split = split_by_trajectory(ds.records.size(), cfg.records_per_trajectory, cfg.val_fraction, cfg.seed);
  LossReport report;
  report.stage = s;
  if (cfg.epochs == 0) return report;
  auto validate = [&] {
    return split.val.empty() ? 0.0 : validation_nmse_db(model, s, ds, split.val, cfg.batch, cfg.threads);
  };
  report.initial_val_nmse_db = validate();
  AdamState adam = make_adam_state(params, {cfg.learning_rate, cfg.weight_decay});
  zero_grad(params);
  std::vector<std::size_t> order = split.train;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss el;
    el.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - start);
      const Batch b = make_batch(ds, std::span<const std::size_t>(order).subspan(start, n));
      StepLoss loss;
      Real v = 0;
      {
        Graph g;
        loss = step(g, b);
        v = loss.objective.value()[0];
        if (!std::isfinite(v)) {
          if (!cfg.checkpoint_path.empty()) {
            auto p = cfg.checkpoint_path;
            save_weights(p += ".diverged", checkpoint(model, s));
          }
          throw TrainingDiverged(stage_name(s) + ": loss is not finite at epoch " + std::to_string(epoch));
        }
        g.backward(loss.objective);
        loss.objective = Var();
      }
      if (epoch == 1)
        for (const auto& [name, p] : params) {
          Real l1 = 0;
          for (Real x : p->grad.values()) l1 += std::abs(x);
          report.first_epoch_gradient[name] += l1;
        }
      adam_step(params, adam);
      zero_grad(params);
      el.batch_losses.push_back(v);
      el.l_pfm += loss.pfm;
      el.l_main += loss.main;
      el.l_aux += loss.aux;
    }
    const Real nb = static_cast<Real>(el.batch_losses.size());
    el.l_tot = std::accumulate(el.batch_losses.begin(), el.batch_losses.end(), 0.0) / nb;
    el.l_pfm /= nb;
    el.l_main /= nb;
    el.l_aux /= nb;
    el.val_nmse_db = validate();
    report.epochs.push_back(std::move(el));
    if (cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0 && !cfg.checkpoint_path.empty())
      save_weights(cfg.checkpoint_path, checkpoint(model, s));
  }
  return report;
}

}  // namespace

Real validation_nmse_db(PfmCe& model, Stage s, const Dataset& ds, std::span<const std::size_t> idx, std::size_t batch,
                        std::size_t threads) {
  const std::size_t nb = (idx.size() + batch - 1) / batch;
  const std::size_t rows = 2 * ds.header.n_t * ds.header.k, t = ds.header.t;
  std::vector<std::vector<Real>> per(nb);
  parallel_for(nb, threads, [&](std::size_t i) {
    const auto part = idx.subspan(i * batch, std::min(batch, idx.size() - i * batch));
    const Batch b = make_batch(ds, part);
    const Tensor est = stage_output(model, s, b);
    for (std::size_t r = 0; r < part.size(); ++r) {
      Tensor e({rows, t}), h({rows, t});
      std::copy_n(est.data() + r * rows * t, rows * t, e.data());
      std::copy_n(b.truth.data() + r * rows * t, rows * t, h.data());
      per[i].push_back(nmse(e, h));
    }
  });
  NmseAccumulator acc;
  for (const auto& v : per)
    for (Real x : v) acc.add(x);
  return acc.mean_db();
}

LossReport adapt_pfm(PfmCe& model, const Dataset& ds, const TrainConfig& cfg) {
  const auto params = stage_parameters(model, Stage::Adapt);
  return run_stage(model, Stage::Adapt, params,
                   [&](Graph& g, const Batch& b) {
                     Var l = ops::mse(model.pfm.forward(g, b.history).prediction, g.constant(b.truth));
                     StepLoss s{l};
                     s.pfm = l.value()[0];
                     return s;
                   },
                   ds, cfg);
}

LossReport train_phase1(PfmCe& model, const Dataset& ds, const TrainConfig& cfg) {
  if (cfg.epochs > 0) model.init_fusion();
  const auto params = stage_parameters(model, Stage::Phase1);
  return run_stage(model, Stage::Phase1, params,
                   [&](Graph& g, const Batch& b) {
                     auto o = model.forward_fused(g, b.coarse, b.history, b.noise_vars);
                     Var t = g.constant(b.truth);
                     Var main = ops::mse(o.estimate, t), aux = ops::mse(o.pilot, t);
                     StepLoss s{ops::add(main, aux)};
                     s.main = main.value()[0];
                     s.aux = aux.value()[0];
                     return s;
                   },
                   ds, cfg);
}

LossReport train_phase2(PfmCe& model, const Dataset& ds, const TrainConfig& cfg) {
  const auto params = stage_parameters(model, Stage::Phase2);
  return run_stage(model, Stage::Phase2, params,
                   [&](Graph& g, const Batch& b) {
                     // L_aux is not part of this stage, so the pilot decoder is skipped.
                     Var z = model.forward_fused(g, b.coarse, b.history, b.noise_vars, false).estimate;
                     Var main = ops::mse(z, g.constant(b.truth));
                     StepLoss s{main};
                     s.main = main.value()[0];
                     return s;
                   },
                   ds, cfg);
}

LossReport train_vit(PilotNet& net, const ModelConfig& mc, const Dataset& ds, const TrainConfig& cfg) {
  // Host the net in a model shell so validation and checkpoints share code.
  std::mt19937_64 rng(0);
  PfmCe shell(mc, rng);
  std::swap(shell.vit, net);
  const auto params = stage_parameters(shell, Stage::Vit);
  LossReport rep;
  try {
    rep = run_stage(shell, Stage::Vit, params,
                    [&](Graph& g, const Batch& b) {
                      Var l = ops::mse(shell.vit.forward(g, b.coarse, b.noise_vars, mc.grid(b.noise_vars.size())).estimate,
                                       g.constant(b.truth));
                      StepLoss s{l};
                      s.aux = l.value()[0];
                      return s;
                    },
                    ds, cfg);
  } catch (...) {
    std::swap(shell.vit, net);
    throw;
  }
  std::swap(shell.vit, net);
  return rep;
}

LossReport train_stage(PfmCe& model, const Dataset& ds, const TrainConfig& cfg) {
  switch (cfg.stage) {
    case Stage::Adapt: return adapt_pfm(model, ds, cfg);
    case Stage::Phase1: return train_phase1(model, ds, cfg);
    case Stage::Phase2: return train_phase2(model, ds, cfg);
    case Stage::Vit: return train_vit(model.vit, model.config(), ds, cfg);
  }
  throw std::invalid_argument("unknown stage");
}

NamedTensors checkpoint(PfmCe& model, Stage s) {
  NamedParameters all;
  model.collect(all);
  NamedTensors t = snapshot(all);
  t.emplace_back("meta/stage", Tensor({1}, static_cast<Real>(static_cast<int>(s))));
  return t;
}

Stage restore(PfmCe& model, const NamedTensors& tensors) {
  const auto tag = find_tensor(tensors, "meta/stage");
  if (!tag || tag->size() != 1) throw std::invalid_argument("checkpoint has no meta/stage tag");
  const int v = static_cast<int>(std::lround((*tag)[0]));
  if (v < 0 || v > 3) throw std::invalid_argument("checkpoint has an unknown stage tag");
  NamedTensors body;
  for (const auto& e : tensors)
    if (e.first.rfind("meta/", 0) != 0) body.push_back(e);
  NamedParameters all;
  model.collect(all);
  assign(all, body, true);
  return static_cast<Stage>(v);
}

}  // namespace pfmce
