// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pfmce/estimator/metrics.hpp"
#include "pfmce/train/trainer.hpp"

namespace pfmce {
namespace {

constexpr std::size_t kSlots = 4;

ModelConfig tiny_model() {
  ModelConfig m = ModelConfig::desk(1, 12, 14);
  m.pfm.d = 16;
  m.pfm.heads = 2;
  m.vit.layers = 1;
  m.vit.heads = 2;
  m.vit.d_m = 8;
  m.vit.ffn = 16;
  m.vit.channels = 4;
  m.vit.cond_hidden = 4;
  return m;
}

DatasetConfig tiny_channel(std::size_t trajectories) {
  DatasetConfig c;
  c.n_t = 1;
  c.k = 12;
  c.t = 14;
  c.slots = kSlots;
  c.trajectories = trajectories;
  c.calibration_samples = 40;
  return c;
}

const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    const auto cfg = tiny_channel(20);
    return build_dataset(cfg, 11, calibrate_covariances(cfg, 11));
  }();
  return ds;
}

TrainConfig quick(Stage s, std::size_t epochs, Real lr = 3e-3) {
  TrainConfig c = TrainConfig::defaults(s);
  c.epochs = epochs;
  c.batch = 8;
  c.learning_rate = lr;
  c.records_per_trajectory = kSlots - 1;
  c.val_fraction = 0.2;
  return c;
}

NamedTensors weights_of(PfmCe& m) {
  NamedParameters all;
  m.collect(all);
  return snapshot(all);
}

bool same_prefix(const NamedTensors& a, const NamedTensors& b, const std::string& prefix, bool* any = nullptr) {
  bool eq = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first.rfind(prefix, 0) != 0) continue;
    if (any) *any = true;
    const auto& x = a[i].second.values();
    const auto& y = b[i].second.values();
    eq = eq && std::equal(x.begin(), x.end(), y.begin());
  }
  return eq;
}

// history == truth and every row is a distinct sinusoid plus offset: the
// best predictor is the identity on each sequence.
Dataset persistent_dataset(std::size_t records, std::uint64_t seed) {
  Dataset ds;
  ds.header = {1, 12, 14, records, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  const std::size_t q = 24, t = 14;
  for (std::size_t r = 0; r < records; ++r) {
    SlotDatasetRecord rec;
    rec.snr_db = 20;
    std::vector<float> z(q * t);
    for (std::size_t row = 0; row < q; ++row) {
      const double a = 0.5 + u(rng), b = u(rng) - 0.5, f = 0.02 + 0.05 * u(rng), ph = 6.283 * u(rng);
      for (std::size_t s = 0; s < t; ++s)
        z[row * t + s] = static_cast<float>(b + a * std::cos(6.283185307 * f * static_cast<double>(s) + ph));
    }
    rec.coarse = z;
    rec.history = z;
    rec.truth = z;
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

TEST(Split, ByTrajectoryNeverSplitsOne) {
  const Split s = split_by_trajectory(90, 9, 0.1, 3);
  EXPECT_EQ(s.train.size() + s.val.size(), 90u);
  EXPECT_EQ(s.val.size(), 9u);
  std::set<std::size_t> tv, tt;
  for (auto r : s.val) tv.insert(r / 9);
  for (auto r : s.train) tt.insert(r / 9);
  for (auto j : tv) EXPECT_EQ(tt.count(j), 0u);
  EXPECT_THROW(split_by_trajectory(91, 9, 0.1, 3), std::invalid_argument);
}

TEST(Stages, NamesAndPredecessors) {
  for (Stage s : {Stage::Adapt, Stage::Phase1, Stage::Phase2, Stage::Vit}) EXPECT_EQ(parse_stage(stage_name(s)), s);
  EXPECT_THROW(parse_stage("phase3"), std::invalid_argument);
  EXPECT_EQ(predecessor(Stage::Phase2), Stage::Phase1);
  EXPECT_EQ(predecessor(Stage::Phase1), Stage::Adapt);
  EXPECT_FALSE(predecessor(Stage::Adapt));
}

TEST(TrainConfig, StageDefaults) {
  const auto a = TrainConfig::defaults(Stage::Adapt), p1 = TrainConfig::defaults(Stage::Phase1),
             p2 = TrainConfig::defaults(Stage::Phase2);
  EXPECT_EQ(a.learning_rate, 1e-5);
  EXPECT_EQ(a.weight_decay, 1e-2);
  EXPECT_EQ(p1.learning_rate, 1e-5);
  EXPECT_EQ(p1.weight_decay, 1e-2);
  EXPECT_EQ(p2.learning_rate, 1e-4);
  EXPECT_EQ(p2.weight_decay, 1e-4);
}

TEST(Train, ZeroEpochsLeavesWeightsUnchanged) {
  const auto& ds = tiny_dataset();
  for (Stage s : {Stage::Adapt, Stage::Phase1, Stage::Phase2, Stage::Vit}) {
    std::mt19937_64 rng(5);
    PfmCe m(tiny_model(), rng);
    const auto before = weights_of(m);
    const auto rep = train_stage(m, ds, quick(s, 0));
    EXPECT_TRUE(rep.epochs.empty());
    EXPECT_TRUE(same_prefix(before, weights_of(m), "")) << stage_name(s);
  }
}

TEST(Train, AdaptLearnsPersistence) {
  const Dataset ds = persistent_dataset(60, 3);
  std::mt19937_64 rng(6);
  PfmCe m(tiny_model(), rng);
  auto cfg = quick(Stage::Adapt, 40, 1e-2);
  cfg.records_per_trajectory = 1;
  cfg.weight_decay = 0;
  const auto rep = train_stage(m, ds, cfg);
  EXPECT_LE(rep.epochs.back().val_nmse_db, -20.0) << "initial " << rep.initial_val_nmse_db;
}

TEST(Train, AdaptLossDecreases) {
  std::mt19937_64 rng(7);
  PfmCe m(tiny_model(), rng);
  const auto rep = train_stage(m, tiny_dataset(), quick(Stage::Adapt, 20));
  ASSERT_EQ(rep.epochs.size(), 20u);
  EXPECT_LT(rep.epochs.back().l_pfm, rep.epochs.front().l_pfm);
  for (const auto& e : rep.epochs) EXPECT_TRUE(std::isfinite(e.l_pfm) && std::isfinite(e.val_nmse_db));
}

TEST(Train, EpochLossIsMeanOfBatchLosses) {
  std::mt19937_64 rng(8);
  PfmCe m(tiny_model(), rng);
  const auto& ds = tiny_dataset();
  auto cfg = quick(Stage::Phase1, 2);
  const auto rep = train_stage(m, ds, cfg);
  const Split split = split_by_trajectory(ds.records.size(), cfg.records_per_trajectory, cfg.val_fraction, cfg.seed);
  const std::size_t steps = (split.train.size() + cfg.batch - 1) / cfg.batch;
  for (const auto& e : rep.epochs) {
    ASSERT_EQ(e.batch_losses.size(), steps);
    Real s = 0;
    for (Real v : e.batch_losses) s += v;
    EXPECT_NEAR(e.l_tot, s / static_cast<Real>(steps), 1e-9);
    EXPECT_NEAR(e.l_tot, e.l_main + e.l_aux, 1e-12);
  }
}

TEST(Train, Phase1ComponentsDecrease) {
  std::mt19937_64 rng(9);
  PfmCe m(tiny_model(), rng);
  const auto& ds = tiny_dataset();
  train_stage(m, ds, quick(Stage::Adapt, 3));
  const auto rep = train_stage(m, ds, quick(Stage::Phase1, 20));
  int bad_main = 0, bad_aux = 0;
  for (std::size_t i = 1; i < rep.epochs.size(); ++i) {
    bad_main += rep.epochs[i].l_main > rep.epochs[i - 1].l_main;
    bad_aux += rep.epochs[i].l_aux > rep.epochs[i - 1].l_aux;
  }
  EXPECT_LE(bad_main, 2);
  EXPECT_LE(bad_aux, 2);
  EXPECT_LT(rep.epochs.back().l_main, rep.epochs.front().l_main);
  EXPECT_LT(rep.epochs.back().l_aux, rep.epochs.front().l_aux);
}

std::string group_of(const std::string& name) {
  const auto first = name.find('/');
  return name.substr(0, name.find('/', first + 1));
}

TEST(Train, Phase1GradientReachesEveryGroup) {
  std::mt19937_64 rng(10);
  PfmCe m(tiny_model(), rng);
  const auto rep = train_stage(m, tiny_dataset(), quick(Stage::Phase1, 1));
  const auto trainable = stage_parameters(m, Stage::Phase1);
  ASSERT_EQ(rep.first_epoch_gradient.size(), trainable.size());
  std::map<std::string, Real> groups;
  for (const auto& [name, l1] : rep.first_epoch_gradient) groups[group_of(name)] += l1;
  for (const auto& [group, l1] : groups) EXPECT_GT(l1, 0.0) << group;
  for (const char* g : {"pfm/in_res", "pfm/layer0", "pfm/layer1", "vit/embed", "vit/layer0", "vit/decoder"})
    EXPECT_EQ(groups.count(g), 1u) << g;
  EXPECT_TRUE(std::any_of(groups.begin(), groups.end(), [](const auto& e) { return e.first.rfind("fusion/", 0) == 0; }));
  // T = 14 fits in one 32-wide patch: attention over a single token is the
  // identity, so the PFM query/key projections get exactly zero gradient.
  for (const auto& [name, l1] : rep.first_epoch_gradient)
    if (name.rfind("pfm/", 0) == 0 && (name.find("/wq") != std::string::npos || name.find("/wk") != std::string::npos))
      EXPECT_EQ(l1, 0.0) << name;
}

TEST(Train, Phase1GradientReachesEveryTensorWithTwoPatches) {
  auto cfg = tiny_model();
  cfg.pfm.patch = 7;
  std::mt19937_64 rng(10);
  PfmCe m(cfg, rng);
  const auto rep = train_stage(m, tiny_dataset(), quick(Stage::Phase1, 1));
  for (const auto& [name, l1] : rep.first_epoch_gradient) EXPECT_GT(l1, 0.0) << name;
}

TEST(Train, Phase2FreezesExactlyTheBackbone) {
  std::mt19937_64 rng(11);
  PfmCe m(tiny_model(), rng);
  const auto& ds = tiny_dataset();
  train_stage(m, ds, quick(Stage::Phase1, 1));
  const auto before = weights_of(m);
  const auto rep = train_stage(m, ds, quick(Stage::Phase2, 2, 1e-3));
  const auto after = weights_of(m);
  bool any = false;
  EXPECT_TRUE(same_prefix(before, after, kBackbonePrefix, &any));
  EXPECT_TRUE(any);
  EXPECT_FALSE(same_prefix(before, after, "fusion/"));
  EXPECT_FALSE(same_prefix(before, after, "vit/"));
  EXPECT_FALSE(same_prefix(before, after, "pfm/in_res"));

  // Among the parameters of the fused estimator, the frozen ones are
  // exactly pfm/layer*. pfm/out_res feeds only the adapt-stage prediction.
  NamedParameters all;
  m.collect(all);
  const auto p2 = stage_parameters(m, Stage::Phase2);
  std::set<std::string> trainable;
  for (const auto& e : p2) trainable.insert(e.first);
  for (const auto& [name, p] : all) {
    if (name.rfind("pfm/out_res", 0) == 0) continue;
    const bool backbone = name.rfind(kBackbonePrefix, 0) == 0;
    EXPECT_EQ(trainable.count(name) == 0, backbone) << name;
  }
  for (const auto& e : rep.first_epoch_gradient) EXPECT_NE(e.first.rfind(kBackbonePrefix, 0), 0u) << e.first;
}

TEST(Train, Phase2IgnoresAuxLoss) {
  // Same weights, decoder perturbed: only the fused path is optimized, so
  // the pilot decoder receives gradient from the fusion path alone and a
  // decoder tweak must leave the phase-2 loss unchanged.
  std::mt19937_64 rng(12);
  PfmCe m(tiny_model(), rng);
  const auto& ds = tiny_dataset();
  train_stage(m, ds, quick(Stage::Phase1, 1));
  PfmCe m2 = m;
  m2.vit.dec.conv_out.kernel.value.data()[0] += 0.5;
  const auto r1 = train_stage(m, ds, quick(Stage::Phase2, 1, 1e-3));
  const auto r2 = train_stage(m2, ds, quick(Stage::Phase2, 1, 1e-3));
  EXPECT_EQ(r1.epochs[0].batch_losses, r2.epochs[0].batch_losses);
  EXPECT_EQ(r1.epochs[0].l_aux, 0.0);
}

TEST(Train, Phase2DoesNotHurtValidation) {
  std::mt19937_64 rng(13);
  PfmCe m(tiny_model(), rng);
  const auto& ds = tiny_dataset();
  train_stage(m, ds, quick(Stage::Adapt, 3));
  const auto p1 = train_stage(m, ds, quick(Stage::Phase1, 6));
  const auto p2 = train_stage(m, ds, quick(Stage::Phase2, 6, 1e-4));
  EXPECT_NEAR(p2.initial_val_nmse_db, p1.epochs.back().val_nmse_db, 1e-9);
  EXPECT_LE(p2.epochs.back().val_nmse_db, p1.epochs.back().val_nmse_db + 0.1);
}

TEST(Train, BitExactReproducibility) {
  const auto& ds = tiny_dataset();
  std::vector<NamedTensors> runs;
  for (int i = 0; i < 2; ++i) {
    std::mt19937_64 rng(14);
    PfmCe m(tiny_model(), rng);
    auto cfg = quick(Stage::Phase1, 2);
    cfg.threads = i == 0 ? 1 : 3;
    train_stage(m, ds, quick(Stage::Adapt, 2));
    train_stage(m, ds, cfg);
    runs.push_back(weights_of(m));
  }
  EXPECT_TRUE(same_prefix(runs[0], runs[1], ""));
}

TEST(Train, VitStageTouchesOnlyThePilotNet) {
  std::mt19937_64 rng(15);
  PfmCe m(tiny_model(), rng);
  const auto before = weights_of(m);
  const auto rep = train_stage(m, tiny_dataset(), quick(Stage::Vit, 2));
  const auto after = weights_of(m);
  EXPECT_TRUE(same_prefix(before, after, "pfm/"));
  EXPECT_TRUE(same_prefix(before, after, "fusion/"));
  EXPECT_FALSE(same_prefix(before, after, "vit/"));
  EXPECT_LT(rep.epochs.back().val_nmse_db, rep.initial_val_nmse_db);
}

TEST(Checkpoint, StageTagRoundTrip) {
  std::mt19937_64 rng(16);
  PfmCe m(tiny_model(), rng);
  const auto path = std::filesystem::temp_directory_path() / "pfmce_ckpt_test.pfmw";
  save_weights(path, checkpoint(m, Stage::Phase2));
  std::mt19937_64 rng2(17);
  PfmCe m2(tiny_model(), rng2);
  EXPECT_EQ(restore(m2, load_weights(path)), Stage::Phase2);
  const auto a = weights_of(m), b = weights_of(m2);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].second.size(); ++j)
      EXPECT_EQ(b[i].second[j], static_cast<Real>(static_cast<float>(a[i].second[j])));
  std::filesystem::remove(path);
  EXPECT_THROW(restore(m2, snapshot(NamedParameters{})), std::invalid_argument);
}

TEST(LossReport, CsvRowsEqualEpochs) {
  std::mt19937_64 rng(18);
  PfmCe m(tiny_model(), rng);
  const auto rep = train_stage(m, tiny_dataset(), quick(Stage::Phase1, 3));
  std::ostringstream os;
  rep.write_csv(os);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("epoch,l_main,l_aux,l_tot,val_nmse_db\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
}

TEST(Train, DivergenceAbortsWithCheckpoint) {
  std::mt19937_64 rng(19);
  PfmCe m(tiny_model(), rng);
  m.vit.dec.conv_out.kernel.value.data()[0] = std::numeric_limits<Real>::quiet_NaN();
  auto cfg = quick(Stage::Phase1, 1);
  cfg.checkpoint_path = std::filesystem::temp_directory_path() / "pfmce_div_test.pfmw";
  auto marker = cfg.checkpoint_path;
  marker += ".diverged";
  std::filesystem::remove(marker);
  EXPECT_THROW(train_stage(m, tiny_dataset(), cfg), TrainingDiverged);
  EXPECT_TRUE(std::filesystem::exists(marker));
  std::filesystem::remove(marker);
}

}  // namespace
}  // namespace pfmce
