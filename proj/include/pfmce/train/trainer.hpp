// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfmce/channel/dataset.hpp"
#include "pfmce/core/adam.hpp"
#include "pfmce/core/weights.hpp"
#include "pfmce/estimator/estimator.hpp"

namespace pfmce {

/// adapt: PFM alone on L_PFM. phase1: everything on L_main + L_aux.
/// phase2: backbone layers frozen, L_main only. vit: standalone pilot-net
/// baseline on its own output.
enum class Stage : std::uint8_t { Adapt = 0, Phase1 = 1, Phase2 = 2, Vit = 3 };

std::string stage_name(Stage s);
Stage parse_stage(const std::string& name);
/// Stage whose checkpoint must be loaded first, if any.
std::optional<Stage> predecessor(Stage s);

/// Parameters whose names start with this are frozen in phase 2.
inline constexpr char kBackbonePrefix[] = "pfm/layer";

struct TrainConfig {
  Stage stage = Stage::Adapt;
  Real learning_rate = 1e-5;
  Real weight_decay = 1e-2;
  std::size_t epochs = 20;
  std::size_t batch = 64;
  std::uint64_t seed = 1;
  /// Share of trajectories held out for validation.
  Real val_fraction = 0.1;
  std::size_t records_per_trajectory = 9;
  /// Write a checkpoint every n epochs (0: only at the end); needs a path.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
  /// Worker threads for validation passes; training steps are serial.
  std::size_t threads = 1;

  /// adapt / phase1 / vit: lr 1e-5, decay 1e-2; phase2: lr 1e-4, decay 1e-4.
  static TrainConfig defaults(Stage s);
  void validate() const;
};

struct EpochLoss {
  std::size_t epoch = 0;  // 1-based
  Real l_pfm = 0;         // adapt only
  Real l_main = 0;
  Real l_aux = 0;
  Real l_tot = 0;         // the optimized objective of the stage
  Real val_nmse_db = 0;
  std::vector<Real> batch_losses;
};

struct LossReport {
  Stage stage = Stage::Adapt;
  std::vector<EpochLoss> epochs;
  /// Sum over epoch-1 steps of each parameter's gradient L1 norm.
  std::map<std::string, Real> first_epoch_gradient;
  /// Validation NMSE (dB) of the incoming weights.
  Real initial_val_nmse_db = 0;

  /// Header "epoch,<loss names>,val_nmse_db", one row per epoch.
  void write_csv(std::ostream& os) const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Split {
  std::vector<std::size_t> train, val;
};

/// Whole trajectories (runs of records_per_trajectory records) go to one
/// side; the choice is a seeded shuffle of trajectory ids.
Split split_by_trajectory(std::size_t records, std::size_t per_trajectory, Real val_fraction, std::uint64_t seed);

/// Stacked inputs for a set of records.
struct Batch {
  Tensor coarse, history, truth;  // [B*Q x T]
  std::vector<Real> noise_vars;
};
Batch make_batch(const Dataset& ds, std::span<const std::size_t> idx);

/// Marks the stage's trainable set on `model` and returns it. Parameters
/// outside the set are frozen (phase 2 also freezes kBackbonePrefix).
NamedParameters stage_parameters(PfmCe& model, Stage s);

LossReport adapt_pfm(PfmCe& model, const Dataset& ds, const TrainConfig& cfg);
/// Starts by resetting the fusion head (PfmCe::init_fusion).
LossReport train_phase1(PfmCe& model, const Dataset& ds, const TrainConfig& cfg);
LossReport train_phase2(PfmCe& model, const Dataset& ds, const TrainConfig& cfg);
LossReport train_vit(PilotNet& net, const ModelConfig& mc, const Dataset& ds, const TrainConfig& cfg);
/// Dispatch on cfg.stage (vit uses model.vit).
LossReport train_stage(PfmCe& model, const Dataset& ds, const TrainConfig& cfg);

/// Mean validation NMSE in dB of the stage's output on records idx.
Real validation_nmse_db(PfmCe& model, Stage s, const Dataset& ds, std::span<const std::size_t> idx,
                        std::size_t batch = 64, std::size_t threads = 1);

/// Weight container with the stage tag stored as "meta/stage". restore()
/// ignores every "meta/" entry when assigning weights.
NamedTensors checkpoint(PfmCe& model, Stage s);
/// Loads a checkpoint; returns its stage tag.
Stage restore(PfmCe& model, const NamedTensors& tensors);

}  // namespace pfmce
