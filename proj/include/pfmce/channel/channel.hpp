// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "pfmce/core/tensor.hpp"

namespace pfmce {

using Complex = std::complex<Real>;

inline constexpr Real kSpeedOfLight = 299792458.0;

enum class ProfileId : std::uint8_t { A30 = 0, B100 = 1, C300 = 2, DLos = 3 };

std::string profile_name(ProfileId id);
ProfileId parse_profile(const std::string& name);

struct TdlProfile {
  std::string label;
  Real rms_delay_spread = 0;  // seconds
  std::vector<Real> delays;   // seconds, ascending
  std::vector<Real> powers;   // linear, sum 1
  std::vector<Real> k_factors;  // linear Rician K per tap, 0 = Rayleigh

  std::size_t taps() const { return delays.size(); }
  Real measured_rms_delay_spread() const;

  /// Exponential power profile over `taps` equally spaced taps spanning
  /// 4 * rms; the decay constant is solved so the rms spread matches.
  static TdlProfile exponential(std::string label, Real rms, std::size_t taps = 12);
  static TdlProfile single_tap();
  static TdlProfile make(ProfileId id);
};

struct MobilityConfig {
  Real speed_mps = 0;
  Real carrier_hz = 3.5e9;
  Real subcarrier_spacing_hz = 30e3;

  static MobilityConfig from_kmh(Real kmh, Real carrier_hz, Real scs_hz) { return {kmh / 3.6, carrier_hz, scs_hz}; }
  Real doppler_hz() const { return speed_mps * carrier_hz / kSpeedOfLight; }
  /// Useful symbol plus normal cyclic prefix: (1 + 1/14) / scs.
  Real symbol_duration() const { return (1.0 + 1.0 / 14.0) / subcarrier_spacing_hz; }
};

struct SpatialCorrelation {
  std::string label;
  Real rho = 0;
  std::size_t n_t = 1;
  std::vector<Real> matrix;  // n_t x n_t, row-major

  /// Exponential model R[p,q] = rho^|p-q|; labels Low, Medium, Medium-A, High.
  static SpatialCorrelation make(const std::string& label, std::size_t n_t);
  static SpatialCorrelation exponential(Real rho, std::size_t n_t);
  /// Symmetric square root; throws std::invalid_argument if not PSD.
  std::vector<Real> sqrt_matrix() const;
};

/// One slot of channel coefficients over (antenna, subcarrier, symbol).
struct ChannelRealization {
  std::size_t n_t = 0, k = 0, t = 0;
  std::vector<Real> re, im;  // index (n * k + sc) * t + sym

  ChannelRealization() = default;
  ChannelRealization(std::size_t n_t, std::size_t k, std::size_t t);

  std::size_t index(std::size_t n, std::size_t sc, std::size_t sym) const { return (n * k + sc) * t + sym; }
  Complex get(std::size_t n, std::size_t sc, std::size_t sym) const {
    const auto i = index(n, sc, sym);
    return {re[i], im[i]};
  }
  void set(std::size_t n, std::size_t sc, std::size_t sym, Complex v) {
    const auto i = index(n, sc, sym);
    re[i] = v.real();
    im[i] = v.imag();
  }
  std::size_t size() const { return re.size(); }

  /// Real-stacked [2 n_t * k, t]; row (c * n_t + n) * k + sc, c = 0 real, 1 imag.
  Tensor stacked() const;
  static ChannelRealization from_stacked(const Tensor& z, std::size_t n_t);
  Real energy() const;
};

/// n_slots consecutive slots of one user; fading continues across slots.
std::vector<ChannelRealization> generate_trajectory(const TdlProfile& profile, const MobilityConfig& mobility,
                                                    const SpatialCorrelation& correlation, std::size_t n_t,
                                                    std::size_t k, std::size_t t, std::size_t n_slots,
                                                    std::uint64_t seed, std::size_t sinusoids = 32);

/// Stateless 64-bit seed mixer (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace pfmce
