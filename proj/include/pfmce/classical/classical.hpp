// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "pfmce/channel/pilots.hpp"
#include "pfmce/core/weights.hpp"

namespace pfmce {

/// LS values at each antenna's own pilot REs.
struct PilotEstimate {
  std::size_t n_t = 0, k = 0, t = 0;
  std::vector<std::size_t> symbols;
  std::vector<std::vector<std::size_t>> subcarriers;  // per antenna
  std::vector<std::vector<Complex>> values;           // per antenna, [si * J + j]
};

PilotEstimate ls_at_pilots(const PilotObservation& obs, const PilotPattern& pattern);

/// Linear interpolation in frequency (per pilot symbol) then in time, with
/// constant extrapolation beyond the outermost pilots.
ChannelRealization interpolate_linear(const PilotEstimate& est);

/// Second-order statistics of one bucket. Both matrices are Hermitian,
/// row-major, and already carry the diagonal loading.
struct BucketCovariance {
  std::size_t k = 0, t = 0;
  std::vector<Complex> freq;  // k x k
  std::vector<Complex> time;  // t x t
  std::size_t samples = 0;
};

class CovarianceBank {
 public:
  static constexpr const char* kPooled = "pooled";

  static std::string bucket_key(ProfileId profile, Real speed_kmh, PatternId pattern);

  bool contains(const std::string& bucket) const { return buckets_.count(bucket) != 0; }
  const BucketCovariance& at(const std::string& bucket) const;
  /// Named bucket if present, otherwise the pooled one.
  const BucketCovariance& lookup(const std::string& bucket) const;
  void insert(const std::string& bucket, BucketCovariance c) { buckets_[bucket] = std::move(c); }
  const std::map<std::string, BucketCovariance>& buckets() const { return buckets_; }

  /// "cov_f/<bucket>" [2,k,k] and "cov_t/<bucket>" [2,t,t] (re, im planes).
  NamedTensors to_tensors() const;
  static CovarianceBank from_tensors(const NamedTensors& tensors);

 private:
  std::map<std::string, BucketCovariance> buckets_;
};

struct LabeledChannel {
  std::string bucket;
  const ChannelRealization* h = nullptr;
};

/// Sample covariances per bucket plus a pooled bucket over everything.
/// Throws std::invalid_argument naming any bucket with fewer than
/// min_samples realizations.
CovarianceBank estimate_covariances(const std::vector<LabeledChannel>& data, std::size_t min_samples = 100,
                                    Real loading = 1e-6);

/// Separable Wiener interpolation: frequency filter per pilot symbol, then
/// a time filter over the pilot symbols. The time stage treats the mean
/// frequency-stage error variance as its noise.
ChannelRealization lmmse_interpolate(const PilotEstimate& est, const BucketCovariance& cov, Real noise_var);

/// x[c, k, t] -> [c, k, t / r_t]: means over r_f x r_t tiles, each tile
/// mean written to all r_f subcarrier rows of the tile.
Tensor despread(const Tensor& x, std::size_t r_t, std::size_t r_f);

}  // namespace pfmce
