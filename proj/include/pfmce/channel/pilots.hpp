// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pfmce/channel/channel.hpp"

namespace pfmce {

enum class PatternId : std::uint8_t { P2 = 0, P4 = 1 };

std::string pattern_name(PatternId id);
PatternId parse_pattern(const std::string& name);

/// Frequency-comb pilots on a fixed set of symbols. Antenna n occupies
/// subcarriers offset[n] + j * stride of every pilot symbol.
struct PilotPattern {
  std::string label;
  std::size_t n_t = 0, k = 0, t = 0;
  std::vector<std::size_t> symbols;
  std::size_t stride = 1;
  std::vector<std::size_t> offsets;
  /// Unit-modulus pilot values; see value_index().
  std::vector<Complex> values;

  std::vector<std::size_t> subcarriers(std::size_t n) const;
  std::size_t per_symbol(std::size_t n) const { return subcarriers(n).size(); }
  /// Flat index of (antenna n, pilot symbol slot si, comb slot j).
  std::size_t value_index(std::size_t n, std::size_t si, std::size_t j) const;
  std::size_t total() const { return values.size(); }

  /// 2P -> symbols {2, 11}, 4P -> {2, 5, 8, 11}; stride max(4, n_t),
  /// offsets 0..n_t-1; QPSK values drawn from `seed`.
  static PilotPattern make(PatternId id, std::size_t n_t, std::size_t k, std::size_t t, std::uint64_t seed = 7);
  static PilotPattern custom(std::string label, std::size_t n_t, std::size_t k, std::size_t t,
                             std::vector<std::size_t> symbols, std::size_t stride, std::uint64_t seed = 7);
  /// Every symbol carries pilots and the comb stride is n_t, so with one
  /// antenna every RE is a pilot.
  static PilotPattern dense(std::size_t n_t, std::size_t k, std::size_t t, std::uint64_t seed = 7);

  /// Throws std::invalid_argument on any broken invariant.
  void validate() const;
};

/// Received pilots, aligned with PilotPattern::values.
struct PilotObservation {
  std::vector<Complex> y;
  Real noise_var = 0;
};

inline constexpr Real kNoiselessSnr = std::numeric_limits<Real>::infinity();

Real noise_variance(Real snr_db);

/// Y_P = H_P * X_P + N_P on every pilot RE; complex AWGN of variance
/// 10^(-snr_db/10). snr_db = +inf disables noise.
PilotObservation apply_pilots(const ChannelRealization& h, const PilotPattern& pattern, Real snr_db,
                              std::mt19937_64& rng);

}  // namespace pfmce
