// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfmce/cli/sweep.hpp"
#include "pfmce/train/trainer.hpp"

namespace pfmce {

/// Bad config file, key or value; carries the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::invalid_argument(key + ": " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct StageSchedule {
  Real learning_rate = 0;
  Real weight_decay = 0;
};

/// Everything a run needs. Keys are "section.name"; see key_reference().
struct RunConfig {
  std::uint64_t seed = 1;
  DatasetConfig channel;  // [channel] + [pilot]
  ModelConfig model;      // [pfm] + [vit]; grid copied from [channel]
  // [train]
  std::size_t epochs = 20, batch = 64, checkpoint_every = 0;
  Real val_fraction = 0.1;
  StageSchedule adapt{1e-5, 1e-2}, phase1{1e-5, 1e-2}, phase2{1e-4, 1e-4}, vit{1e-5, 1e-2};
  // [eval]
  EvalConfig eval;
  std::vector<Method> methods{Method::Lmmse, Method::Vit, Method::PfmCe};

  RunConfig();

  /// Applies one "section.key = value" setting; throws ConfigError.
  void set(const std::string& key, const std::string& value);
  /// INI text: [section] headers, key = value lines, '#' or ';' comments.
  /// Top-level keys (before any section) belong to [run].
  void load(std::istream& is);
  void load_file(const std::filesystem::path& path);

  TrainConfig train_config(Stage s) const;
  /// Network config for a (n_t, k, t) grid.
  ModelConfig model_for(std::size_t n_t, std::size_t k, std::size_t t) const;
  /// The channel config with the [eval] axes substituted.
  EvalConfig eval_config() const;

  /// Every effective value, one "section.key=value" per line, sorted.
  std::string canonical() const;
  Digest digest() const;

  /// Documented keys with their defaults, as INI text.
  static std::string key_reference();
};

}  // namespace pfmce
