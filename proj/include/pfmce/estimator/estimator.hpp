// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <optional>
#include <random>
#include <vector>

#include "pfmce/channel/dataset.hpp"
#include "pfmce/pfm/pfm.hpp"
#include "pfmce/vit/pilot_net.hpp"

namespace pfmce {

struct ModelConfig {
  std::size_t n_t = 4, k = 24, t = 14;
  PfmConfig pfm;
  VitConfig vit;
  /// Scale the fusion output back with the history statistics, as the PFM
  /// output block does. Off: the head output is the estimate itself.
  /// With vit.coarse_skip the head output is a correction to the coarse
  /// input and only the history scale is applied.
  bool fusion_denormalize = true;

  std::size_t q() const { return 2 * n_t * k; }
  GridShape grid(std::size_t batch) const { return {batch, 2 * n_t, k}; }
  void validate() const;
  /// Desk-scale networks for a (n_t, k, t) grid.
  static ModelConfig desk(std::size_t n_t = 4, std::size_t k = 24, std::size_t t = 14);
};

/// Residual block on [U', R] rows: (d + d_m) -> d -> T.
class FusionHead {
 public:
  FusionHead() = default;
  FusionHead(std::size_t d, std::size_t d_m, std::size_t t, std::mt19937_64& rng);

  Var operator()(Graph& g, Var u, Var r);
  void collect(NamedParameters& out);
  /// Copy a d -> d -> T output block into the U' part; R columns get zeros.
  void warm_start(const ResidualBlock& pfm_out);
  /// Zero the output and skip projections; fc1 keeps its random init.
  void zero_output();

  std::size_t d = 0, d_m = 0;
  ResidualBlock block;
};

/// Concatenate rows and project; no denormalization.
Var fuse(Graph& g, FusionHead& head, Var u, Var r);

/// Full estimator: PFM on the previous estimate, pilot net on the current
/// coarse estimate, fusion of their hidden states.
class PfmCe {
 public:
  PfmCe() = default;
  PfmCe(const ModelConfig& cfg, std::mt19937_64& rng);

  const ModelConfig& config() const { return cfg_; }

  struct Output {
    Var estimate;  // Z-hat, [B*Q x T]
    Var pilot;     // z_p from the pilot net, [B*Q x T]
  };

  /// Slot i >= 2 path for a batch: history and coarse are [B*Q x T].
  /// Without decode_pilot the pilot decoder is skipped and `pilot` is unset.
  Output forward_fused(Graph& g, const Tensor& coarse, const Tensor& history, const std::vector<Real>& noise_vars,
                       bool decode_pilot = true);
  /// Slot 1 path: pilot net only.
  Output forward_pilot(Graph& g, const Tensor& coarse, const std::vector<Real>& noise_vars);

  void collect(NamedParameters& out);
  /// Fusion head start point: a copy of the PFM output block, or a zero
  /// correction when vit.coarse_skip is set.
  void init_fusion();

  Pfm pfm;
  PilotNet vit;
  FusionHead fusion;

 private:
  ModelConfig cfg_;
};

struct SlotContext {
  std::size_t index = 1;            // 1-based slot number
  std::optional<Tensor> history;    // previous estimate [Q x T]; empty iff index == 1
  Tensor coarse;                    // [Q x T]
  Real noise_var = 0;
};

Tensor estimate_slot(PfmCe& model, const SlotContext& ctx);

/// One received slot: pilots plus the true channel when known.
struct SlotInput {
  PilotObservation observation;
  std::optional<ChannelRealization> truth;
};

struct TrajectoryResult {
  std::vector<Tensor> estimates;  // [Q x T] per slot
  std::vector<Real> nmse;         // per slot; empty when truth is missing
};

/// Coarse estimate as a real-stacked [Q x T] tensor.
Tensor coarse_input(const PilotObservation& obs, const PilotPattern& pattern, Interpolation interp,
                    const CovarianceBank& bank, const std::string& bucket);

/// Slot-recursive estimation: the estimate of slot i is the only history of
/// slot i + 1.
TrajectoryResult run_trajectory(PfmCe& model, const std::vector<SlotInput>& slots, const PilotPattern& pattern,
                                const CovarianceBank& bank, const std::string& bucket,
                                Interpolation interp = Interpolation::Lmmse);

}  // namespace pfmce
