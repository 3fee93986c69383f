// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pfmce/channel/pilots.hpp"
#include "pfmce/classical/classical.hpp"
#include "pfmce/core/digest.hpp"

namespace pfmce {

/// Ranges the generator draws from, one value per trajectory.
struct DatasetConfig {
  std::size_t n_t = 4, k = 24, t = 14;
  std::size_t slots = 10;
  std::size_t trajectories = 100;
  std::vector<ProfileId> profiles{ProfileId::A30, ProfileId::B100, ProfileId::C300};
  std::vector<Real> speeds_kmh{30, 90, 300};
  std::vector<Real> snrs_db{5, 10, 15, 20, 25};
  std::vector<PatternId> patterns{PatternId::P2, PatternId::P4};
  std::vector<std::string> correlations{"Low", "Medium", "Medium-A", "High"};
  std::vector<Real> scs_khz{15, 30};
  Real carrier_ghz = 3.5;
  std::uint64_t pilot_seed = 7;
  /// Channel realizations per covariance bucket in the calibration pass.
  std::size_t calibration_samples = 120;

  std::size_t records() const { return trajectories * (slots - 1); }
  std::size_t records_per_trajectory() const { return slots - 1; }
  void validate() const;
  /// Stable text form; hashed into the dataset header.
  std::string canonical() const;
};

struct TrajectoryParams {
  ProfileId profile = ProfileId::A30;
  Real speed_kmh = 30;
  Real snr_db = 15;
  PatternId pattern = PatternId::P2;
  std::string correlation = "Low";
  Real scs_khz = 30;

  std::string bucket() const { return CovarianceBank::bucket_key(profile, speed_kmh, pattern); }
};

struct Trajectory {
  TrajectoryParams params;
  std::vector<ChannelRealization> slots;
  std::vector<PilotObservation> observations;
};

TrajectoryParams draw_params(const DatasetConfig& cfg, std::uint64_t seed, std::size_t index);
Trajectory simulate_trajectory(const DatasetConfig& cfg, const TrajectoryParams& params, std::uint64_t seed);
/// draw_params + simulate_trajectory with seeds derived from (seed, index).
Trajectory draw_trajectory(const DatasetConfig& cfg, std::uint64_t seed, std::size_t index);

/// Covariances from freshly generated ground-truth channels: every
/// (profile, speed) pair gets calibration_samples realizations, shared by
/// the pattern buckets, plus the pooled bucket.
CovarianceBank calibrate_covariances(const DatasetConfig& cfg, std::uint64_t seed, std::size_t threads = 1);

enum class Interpolation : std::uint8_t { Linear = 0, Lmmse = 1 };

/// LS followed by the chosen interpolation.
ChannelRealization coarse_estimate(const PilotObservation& obs, const PilotPattern& pattern, Interpolation interp,
                                   const CovarianceBank& bank, const std::string& bucket);

struct SlotDatasetRecord {
  float snr_db = 0;
  PatternId pattern = PatternId::P2;
  ProfileId profile = ProfileId::A30;
  float speed_kmh = 0;
  std::vector<float> coarse;   // [2 n_t, k, t]
  std::vector<float> history;  // [2 n_t k, t]
  std::vector<float> truth;    // [2 n_t k, t]

  Real noise_var() const { return noise_variance(snr_db); }
};

struct DatasetHeader {
  std::size_t n_t = 0, k = 0, t = 0;
  std::uint64_t count = 0;
  Digest digest{};
};

inline constexpr char kDatasetMagic[] = "CHDS1\n";

struct Dataset {
  DatasetHeader header;
  std::vector<SlotDatasetRecord> records;

  Tensor coarse(std::size_t i) const;
  Tensor history(std::size_t i) const;
  Tensor truth(std::size_t i) const;
};

/// Records of trajectory j at positions j*(slots-1) ... ; record r uses
/// linear interpolation for even r and LMMSE for odd r. The history field
/// is the LMMSE estimate of the previous slot.
Dataset build_dataset(const DatasetConfig& cfg, std::uint64_t seed, const CovarianceBank& bank, std::size_t threads = 1);

Digest config_digest(const DatasetConfig& cfg, std::uint64_t seed);

void write_dataset(std::ostream& os, const Dataset& ds);
Dataset read_dataset(std::istream& is);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace pfmce
