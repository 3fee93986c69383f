// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/channel/channel.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace pfmce {

std::string profile_name(ProfileId id) {
  switch (id) {
    case ProfileId::A30: return "A30";
    case ProfileId::B100: return "B100";
    case ProfileId::C300: return "C300";
    case ProfileId::DLos: return "D-LOS";
  }
  throw std::invalid_argument("bad profile id");
}

ProfileId parse_profile(const std::string& name) {
  for (auto id : {ProfileId::A30, ProfileId::B100, ProfileId::C300, ProfileId::DLos})
    if (profile_name(id) == name) return id;
  throw std::invalid_argument("unknown delay profile '" + name + "'");
}

Real TdlProfile::measured_rms_delay_spread() const {
  Real m = 0, m2 = 0;
  for (std::size_t i = 0; i < taps(); ++i) {
    m += powers[i] * delays[i];
    m2 += powers[i] * delays[i] * delays[i];
  }
  return std::sqrt(std::max<Real>(m2 - m * m, 0));
}

TdlProfile TdlProfile::exponential(std::string label, Real rms, std::size_t taps) {
  if (taps < 2 || rms <= 0) throw std::invalid_argument("exponential profile needs >= 2 taps and rms > 0");
  TdlProfile p;
  p.label = std::move(label);
  p.rms_delay_spread = rms;
  const Real spacing = 4 * rms / static_cast<Real>(taps - 1);
  for (std::size_t i = 0; i < taps; ++i) p.delays.push_back(spacing * static_cast<Real>(i));
  p.k_factors.assign(taps, 0);
  auto build = [&](Real tau0) {
    p.powers.resize(taps);
    Real s = 0;
    for (std::size_t i = 0; i < taps; ++i) s += p.powers[i] = std::exp(-p.delays[i] / tau0);
    for (auto& v : p.powers) v /= s;
    return p.measured_rms_delay_spread();
  };
  // rms grows monotonically with tau0; bisect in log space.
  Real lo = rms * 1e-3, hi = rms * 1e3;
  for (int it = 0; it < 200; ++it) {
    const Real mid = std::sqrt(lo * hi);
    (build(mid) < rms ? lo : hi) = mid;
  }
  build(std::sqrt(lo * hi));
  return p;
}

TdlProfile TdlProfile::single_tap() {
  TdlProfile p;
  p.label = "flat";
  p.delays = {0};
  p.powers = {1};
  p.k_factors = {0};
  return p;
}

TdlProfile TdlProfile::make(ProfileId id) {
  switch (id) {
    case ProfileId::A30: return exponential("A30", 30e-9);
    case ProfileId::B100: return exponential("B100", 100e-9);
    case ProfileId::C300: return exponential("C300", 300e-9);
    case ProfileId::DLos: {
      auto p = exponential("D-LOS", 100e-9);
      p.k_factors[0] = std::pow(10.0, 9.0 / 10.0);
      return p;
    }
  }
  throw std::invalid_argument("bad profile id");
}

SpatialCorrelation SpatialCorrelation::exponential(Real rho, std::size_t n_t) {
  if (n_t == 0) throw std::invalid_argument("n_t must be >= 1");
  SpatialCorrelation c;
  c.rho = rho;
  c.n_t = n_t;
  c.matrix.resize(n_t * n_t);
  for (std::size_t p = 0; p < n_t; ++p)
    for (std::size_t q = 0; q < n_t; ++q)
      c.matrix[p * n_t + q] = std::pow(rho, static_cast<Real>(p > q ? p - q : q - p));
  return c;
}

SpatialCorrelation SpatialCorrelation::make(const std::string& label, std::size_t n_t) {
  Real rho;
  if (label == "Low") rho = 0;
  else if (label == "Medium") rho = 0.3;
  else if (label == "Medium-A") rho = 0.6;
  else if (label == "High") rho = 0.9;
  else throw std::invalid_argument("unknown spatial correlation '" + label + "'");
  auto c = exponential(rho, n_t);
  c.label = label;
  return c;
}

std::vector<Real> SpatialCorrelation::sqrt_matrix() const {
  const auto n = static_cast<Eigen::Index>(n_t);
  Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> r(matrix.data(), n, n);
  if ((r - r.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw std::invalid_argument("correlation matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
  auto ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-9) throw std::invalid_argument("correlation matrix is not positive semidefinite");
  Eigen::MatrixXd s = es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  std::vector<Real> out(n_t * n_t);
  for (Eigen::Index p = 0; p < n; ++p)
    for (Eigen::Index q = 0; q < n; ++q) out[p * n + q] = s(p, q);
  return out;
}

ChannelRealization::ChannelRealization(std::size_t n_t_, std::size_t k_, std::size_t t_)
    : n_t(n_t_), k(k_), t(t_), re(n_t_ * k_ * t_, 0), im(n_t_ * k_ * t_, 0) {}

Tensor ChannelRealization::stacked() const {
  Tensor z({2 * n_t * k, t});
  std::copy(re.begin(), re.end(), z.data());
  std::copy(im.begin(), im.end(), z.data() + re.size());
  return z;
}

ChannelRealization ChannelRealization::from_stacked(const Tensor& z, std::size_t n_t) {
  if (z.rank() != 2 || z.dim(0) % (2 * n_t) != 0) throw DimensionError("from_stacked: bad shape " + shape_str(z.shape()));
  ChannelRealization h(n_t, z.dim(0) / (2 * n_t), z.dim(1));
  std::copy(z.data(), z.data() + h.size(), h.re.begin());
  std::copy(z.data() + h.size(), z.data() + 2 * h.size(), h.im.begin());
  return h;
}

Real ChannelRealization::energy() const {
  Real e = 0;
  for (std::size_t i = 0; i < re.size(); ++i) e += re[i] * re[i] + im[i] * im[i];
  return e;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<ChannelRealization> generate_trajectory(const TdlProfile& profile, const MobilityConfig& mobility,
                                                    const SpatialCorrelation& correlation, std::size_t n_t,
                                                    std::size_t k, std::size_t t, std::size_t n_slots,
                                                    std::uint64_t seed, std::size_t sinusoids) {
  if (k < 1 || t < 1 || n_t < 1 || n_slots < 1) throw std::invalid_argument("generate_trajectory: empty grid");
  if (correlation.n_t != n_t) throw std::invalid_argument("generate_trajectory: correlation size != n_t");
  const auto rsqrt = correlation.sqrt_matrix();
  constexpr Real two_pi = 2 * std::numbers::pi;
  const std::size_t L = profile.taps(), M = sinusoids;
  const Real fd = mobility.doppler_hz(), ts = mobility.symbol_duration(), df = mobility.subcarrier_spacing_hz;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> phase(-std::numbers::pi, std::numbers::pi);
  // Per tap and antenna: M Doppler frequencies with random phases, plus a
  // LOS ray for Rician taps.
  struct Ray {
    std::vector<Real> freq, phi;
    Real los_freq = 0, los_phi = 0;
  };
  std::vector<Ray> rays(L * n_t);
  for (auto& r : rays) {
    const Real theta = phase(rng);
    r.freq.resize(M);
    r.phi.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
      const Real alpha = (two_pi * static_cast<Real>(m + 1) - std::numbers::pi + theta) / static_cast<Real>(M);
      r.freq[m] = fd * std::cos(alpha);
      r.phi[m] = phase(rng);
    }
    r.los_freq = fd * std::cos(phase(rng));
    r.los_phi = phase(rng);
  }
  // e^{-j 2 pi f_k tau_l}
  std::vector<Complex> steer(L * k);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t sc = 0; sc < k; ++sc)
      steer[l * k + sc] = std::polar<Real>(1, -two_pi * static_cast<Real>(sc) * df * profile.delays[l]);

  std::vector<ChannelRealization> out(n_slots, ChannelRealization(n_t, k, t));
  std::vector<Complex> gi(n_t), gc(n_t);
  const Real inv_sqrt_m = 1 / std::sqrt(static_cast<Real>(M));
  for (std::size_t slot = 0; slot < n_slots; ++slot)
    for (std::size_t sym = 0; sym < t; ++sym) {
      const Real time = static_cast<Real>(slot * t + sym) * ts;
      for (std::size_t l = 0; l < L; ++l) {
        const Real kf = profile.k_factors[l];
        const Real amp = std::sqrt(profile.powers[l]);
        for (std::size_t n = 0; n < n_t; ++n) {
          const Ray& r = rays[l * n_t + n];
          Complex s = 0;
          for (std::size_t m = 0; m < M; ++m) s += std::polar<Real>(1, two_pi * r.freq[m] * time + r.phi[m]);
          s *= inv_sqrt_m;
          if (kf > 0)
            s = std::sqrt(kf / (kf + 1)) * std::polar<Real>(1, two_pi * r.los_freq * time + r.los_phi) +
                std::sqrt(1 / (kf + 1)) * s;
          gi[n] = amp * s;
        }
        for (std::size_t p = 0; p < n_t; ++p) {
          Complex s = 0;
          for (std::size_t q = 0; q < n_t; ++q) s += rsqrt[p * n_t + q] * gi[q];
          gc[p] = s;
        }
        for (std::size_t n = 0; n < n_t; ++n)
          for (std::size_t sc = 0; sc < k; ++sc) {
            const auto i = out[slot].index(n, sc, sym);
            const Complex h = gc[n] * steer[l * k + sc];
            out[slot].re[i] += h.real();
            out[slot].im[i] += h.imag();
          }
      }
    }
  return out;
}

}  // namespace pfmce
