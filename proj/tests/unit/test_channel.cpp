// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "pfmce/channel/channel.hpp"
#include "pfmce/channel/pilots.hpp"

namespace pfmce {
namespace {

MobilityConfig mob(Real kmh, Real scs_khz = 30) { return MobilityConfig::from_kmh(kmh, 3.5e9, scs_khz * 1e3); }

TEST(TdlProfile, PowersAndSpread) {
  for (auto id : {ProfileId::A30, ProfileId::B100, ProfileId::C300, ProfileId::DLos}) {
    const auto p = TdlProfile::make(id);
    EXPECT_EQ(p.taps(), 12u);
    Real s = 0;
    for (auto v : p.powers) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_TRUE(std::is_sorted(p.delays.begin(), p.delays.end()));
    EXPECT_GE(p.delays.front(), 0.0);
    EXPECT_NEAR(p.measured_rms_delay_spread(), p.rms_delay_spread, 1e-3 * p.rms_delay_spread);
  }
  EXPECT_NEAR(TdlProfile::make(ProfileId::DLos).k_factors[0], std::pow(10.0, 0.9), 1e-12);
  EXPECT_EQ(TdlProfile::make(ProfileId::A30).k_factors[0], 0.0);
}

TEST(Mobility, DopplerAndSymbolDuration) {
  const auto m = mob(90, 30);
  EXPECT_NEAR(m.doppler_hz(), 25.0 * 3.5e9 / kSpeedOfLight, 1e-9);
  EXPECT_NEAR(m.symbol_duration(), (1 + 1.0 / 14) / 30e3, 1e-18);
}

TEST(SpatialCorrelation, LabelsAndSqrt) {
  const auto c = SpatialCorrelation::make("Medium-A", 4);
  EXPECT_DOUBLE_EQ(c.rho, 0.6);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c.matrix[i * 4 + i], 1.0);
  const auto s = c.sqrt_matrix();
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t q = 0; q < 4; ++q) {
      Real v = 0;
      for (std::size_t r = 0; r < 4; ++r) v += s[p * 4 + r] * s[r * 4 + q];
      EXPECT_NEAR(v, c.matrix[p * 4 + q], 1e-12);
    }
  EXPECT_THROW(SpatialCorrelation::make("Extreme", 4), std::invalid_argument);
  SpatialCorrelation bad = SpatialCorrelation::exponential(0, 2);
  bad.matrix = {1, 2, 2, 1};
  EXPECT_THROW(bad.sqrt_matrix(), std::invalid_argument);
}

TEST(Trajectory, ZeroDopplerIsConstant) {
  const auto tr = generate_trajectory(TdlProfile::make(ProfileId::B100), mob(0), SpatialCorrelation::make("High", 2), 2,
                                      12, 14, 3, 42);
  Real dev = 0;
  for (const auto& s : tr)
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t k = 0; k < 12; ++k)
        for (std::size_t t = 0; t < 14; ++t) dev = std::max(dev, std::abs(s.get(n, k, t) - tr[0].get(n, k, 0)));
  EXPECT_LT(dev, 1e-9);
}

TEST(Trajectory, SingleTapIsFlat) {
  const auto tr = generate_trajectory(TdlProfile::single_tap(), mob(90), SpatialCorrelation::make("Low", 2), 2, 24, 14,
                                      2, 43);
  Real dev = 0;
  for (const auto& s : tr)
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t t = 0; t < 14; ++t)
        for (std::size_t k = 0; k < 24; ++k) dev = std::max(dev, std::abs(s.get(n, k, t) - s.get(n, 0, t)));
  EXPECT_LT(dev, 1e-9);
}

TEST(Trajectory, Deterministic) {
  auto gen = [] {
    return generate_trajectory(TdlProfile::make(ProfileId::C300), mob(300), SpatialCorrelation::make("Medium", 4), 4,
                               24, 14, 2, 99);
  };
  const auto a = gen(), b = gen();
  EXPECT_EQ(a[1].re, b[1].re);
  EXPECT_EQ(a[1].im, b[1].im);
}

TEST(Trajectory, BadArgumentsThrow) {
  const auto corr = SpatialCorrelation::make("Low", 1);
  EXPECT_THROW(generate_trajectory(TdlProfile::single_tap(), mob(30), corr, 1, 0, 14, 1, 1), std::invalid_argument);
  EXPECT_THROW(generate_trajectory(TdlProfile::single_tap(), mob(30), corr, 1, 4, 0, 1, 1), std::invalid_argument);
  SpatialCorrelation bad = SpatialCorrelation::exponential(0, 2);
  bad.matrix = {1, 2, 2, 1};
  EXPECT_THROW(generate_trajectory(TdlProfile::single_tap(), mob(30), bad, 2, 4, 14, 1, 1), std::invalid_argument);
}

TEST(Trajectory, PowerIsNormalized) {
  Real e = 0;
  std::size_t n = 0;
  for (std::uint64_t s = 0; s < 5000; ++s) {
    const auto tr = generate_trajectory(TdlProfile::make(ProfileId::B100), mob(90), SpatialCorrelation::make("Low", 4),
                                        4, 24, 2, 1, 1000 + s);
    e += tr[0].energy();
    n += tr[0].size();
  }
  EXPECT_NEAR(e / static_cast<Real>(n), 1.0, 0.02);
}

TEST(Trajectory, SpatialCorrelationMatchesModel) {
  Complex c01 = 0, c02 = 0;
  Real p = 0;
  const int N = 4000;
  for (int s = 0; s < N; ++s) {
    const auto tr = generate_trajectory(TdlProfile::single_tap(), mob(30), SpatialCorrelation::make("High", 3), 3, 1, 1,
                                        1, 7000 + s);
    c01 += tr[0].get(0, 0, 0) * std::conj(tr[0].get(1, 0, 0));
    c02 += tr[0].get(0, 0, 0) * std::conj(tr[0].get(2, 0, 0));
    p += std::norm(tr[0].get(0, 0, 0));
  }
  EXPECT_NEAR(c01.real() / p, 0.9, 0.05);
  EXPECT_NEAR(c02.real() / p, 0.81, 0.05);
}

TEST(Trajectory, FrequencyCorrelationFallsWithDelaySpread) {
  // |E[h_k h_{k+4}^*]| / E|h|^2 over many realizations.
  auto corr = [](ProfileId id) {
    Complex c = 0;
    Real p = 0;
    for (std::uint64_t s = 0; s < 400; ++s) {
      const auto tr = generate_trajectory(TdlProfile::make(id), mob(30), SpatialCorrelation::make("Low", 1), 1, 24, 1,
                                          1, 500 + s);
      for (std::size_t k = 0; k + 4 < 24; ++k) {
        c += tr[0].get(0, k, 0) * std::conj(tr[0].get(0, k + 4, 0));
        p += std::norm(tr[0].get(0, k, 0));
      }
    }
    return std::abs(c) / p;
  };
  const Real a = corr(ProfileId::A30), b = corr(ProfileId::B100), c = corr(ProfileId::C300);
  EXPECT_GT(a, b);
  EXPECT_GT(b, c);
}

TEST(Trajectory, SlotBoundaryIsContinuous) {
  // lag-1 correlation across the boundary equals the in-slot lag-1 value
  Complex across = 0, within = 0;
  Real p = 0;
  for (std::uint64_t s = 0; s < 3000; ++s) {
    const auto tr = generate_trajectory(TdlProfile::single_tap(), mob(300, 15), SpatialCorrelation::make("Low", 1), 1, 1,
                                        14, 2, 900 + s);
    across += tr[0].get(0, 0, 13) * std::conj(tr[1].get(0, 0, 0));
    within += tr[0].get(0, 0, 5) * std::conj(tr[0].get(0, 0, 6));
    p += std::norm(tr[0].get(0, 0, 13));
  }
  EXPECT_NEAR(across.real() / p, within.real() / p, 0.03);
}

TEST(Trajectory, JakesAutocorrelationMatchesBessel) {
  const auto m = mob(300, 15);
  const Real fd = m.doppler_hz(), ts = m.symbol_duration();
  const std::size_t lags = 28, N = 10000;
  std::vector<Complex> acc(lags, 0);
  Real p = 0;
  for (std::size_t s = 0; s < N; ++s) {
    const auto tr = generate_trajectory(TdlProfile::single_tap(), m, SpatialCorrelation::make("Low", 1), 1, 1, 14, 2,
                                        20000 + s);
    const Complex h0 = tr[0].get(0, 0, 0);
    for (std::size_t l = 0; l < lags; ++l) acc[l] += tr[l / 14].get(0, 0, l % 14) * std::conj(h0);
    p += std::norm(h0);
  }
  for (std::size_t l = 0; l < lags; ++l) {
    const Real expect = std::cyl_bessel_j(0.0, 2 * std::numbers::pi * fd * ts * static_cast<Real>(l));
    EXPECT_NEAR(acc[l].real() / static_cast<Real>(N), expect, 0.05) << "lag " << l;
  }
  EXPECT_NEAR(p / static_cast<Real>(N), 1.0, 0.05);
}

TEST(Stacked, RoundTripAndLayout) {
  ChannelRealization h(2, 3, 2);
  for (std::size_t i = 0; i < h.size(); ++i) {
    h.re[i] = static_cast<Real>(i);
    h.im[i] = -static_cast<Real>(i);
  }
  const Tensor z = h.stacked();
  EXPECT_EQ(z.shape(), (Shape{12, 2}));
  // row (c * n_t + n) * k + sc
  EXPECT_EQ(z.at((1 * 2 + 1) * 3 + 2, 1), h.im[h.index(1, 2, 1)]);
  EXPECT_EQ(z.at((0 * 2 + 1) * 3 + 0, 0), h.re[h.index(1, 0, 0)]);
  const auto back = ChannelRealization::from_stacked(z, 2);
  EXPECT_EQ(back.re, h.re);
  EXPECT_EQ(back.im, h.im);
}

TEST(Pilots, DefaultPatterns) {
  const auto p2 = PilotPattern::make(PatternId::P2, 4, 24, 14);
  EXPECT_EQ(p2.symbols, (std::vector<std::size_t>{2, 11}));
  const auto p4 = PilotPattern::make(PatternId::P4, 4, 24, 14);
  EXPECT_EQ(p4.symbols, (std::vector<std::size_t>{2, 5, 8, 11}));
  EXPECT_EQ(p4.stride, 4u);
  EXPECT_EQ(p4.subcarriers(3), (std::vector<std::size_t>{3, 7, 11, 15, 19, 23}));
  for (const auto& v : p4.values) EXPECT_NEAR(std::abs(v), 1.0, 1e-15);
}

TEST(Pilots, FdmOrthogonality) {
  for (std::size_t nt : {1u, 2u, 4u, 8u, 16u}) {
    const auto p = PilotPattern::make(PatternId::P4, nt, 24, 14);
    for (std::size_t k = 0; k < 24; ++k) {
      int owners = 0;
      for (std::size_t n = 0; n < nt; ++n) {
        const auto s = p.subcarriers(n);
        owners += std::count(s.begin(), s.end(), k);
      }
      EXPECT_LE(owners, 1);
    }
    for (std::size_t n = 0; n < nt; ++n) EXPECT_GE(p.per_symbol(n), 1u);
  }
  EXPECT_THROW(PilotPattern::make(PatternId::P2, 16, 12, 14), std::invalid_argument);  // antennas 12..15 empty
}

TEST(Pilots, NoiselessObservation) {
  const auto tr = generate_trajectory(TdlProfile::make(ProfileId::A30), mob(30), SpatialCorrelation::make("Low", 4), 4,
                                      24, 14, 1, 5);
  const auto pat = PilotPattern::make(PatternId::P2, 4, 24, 14);
  std::mt19937_64 rng(1);
  const auto obs = apply_pilots(tr[0], pat, kNoiselessSnr, rng);
  EXPECT_EQ(obs.noise_var, 0.0);
  for (std::size_t n = 0; n < 4; ++n) {
    const auto sc = pat.subcarriers(n);
    for (std::size_t si = 0; si < 2; ++si)
      for (std::size_t j = 0; j < sc.size(); ++j) {
        const auto i = pat.value_index(n, si, j);
        EXPECT_LT(std::abs(obs.y[i] - tr[0].get(n, sc[j], pat.symbols[si]) * pat.values[i]), 1e-15);
      }
  }
}

TEST(Pilots, NoiseVariance) {
  EXPECT_NEAR(noise_variance(5), 0.3162, 1e-4);
  EXPECT_NEAR(noise_variance(15), std::pow(10.0, -1.5), 1e-15);
  EXPECT_EQ(noise_variance(kNoiselessSnr), 0.0);
  const ChannelRealization zero(1, 4, 14);
  const auto pat = PilotPattern::dense(1, 4, 14);
  std::mt19937_64 rng(2);
  Real s = 0;
  std::size_t n = 0;
  while (n < 100000) {
    const auto obs = apply_pilots(zero, pat, 5, rng);
    for (const auto& y : obs.y) s += std::norm(y);
    n += obs.y.size();
  }
  EXPECT_NEAR(s / static_cast<Real>(n), noise_variance(5), 0.05 * noise_variance(5));
}

TEST(Pilots, GridMismatchThrows) {
  const ChannelRealization h(2, 24, 14);
  std::mt19937_64 rng(3);
  EXPECT_THROW(apply_pilots(h, PilotPattern::make(PatternId::P2, 4, 24, 14), 10, rng), std::invalid_argument);
}

}  // namespace
}  // namespace pfmce
