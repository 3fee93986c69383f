// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/channel/pilots.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace pfmce {

std::string pattern_name(PatternId id) { return id == PatternId::P2 ? "2P" : "4P"; }

PatternId parse_pattern(const std::string& name) {
  if (name == "2P") return PatternId::P2;
  if (name == "4P") return PatternId::P4;
  throw std::invalid_argument("unknown pilot pattern '" + name + "'");
}

std::vector<std::size_t> PilotPattern::subcarriers(std::size_t n) const {
  std::vector<std::size_t> out;
  for (std::size_t sc = offsets.at(n); sc < k; sc += stride) out.push_back(sc);
  return out;
}

std::size_t PilotPattern::value_index(std::size_t n, std::size_t si, std::size_t j) const {
  std::size_t base = 0;
  for (std::size_t a = 0; a < n; ++a) base += symbols.size() * per_symbol(a);
  return base + si * per_symbol(n) + j;
}

PilotPattern PilotPattern::custom(std::string label, std::size_t n_t, std::size_t k, std::size_t t,
                                  std::vector<std::size_t> symbols, std::size_t stride, std::uint64_t seed) {
  PilotPattern p;
  p.label = std::move(label);
  p.n_t = n_t;
  p.k = k;
  p.t = t;
  p.symbols = std::move(symbols);
  p.stride = stride;
  for (std::size_t n = 0; n < n_t; ++n) p.offsets.push_back(n);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bit(0.5);
  const Real a = 1 / std::sqrt(2.0);
  for (std::size_t n = 0; n < n_t; ++n) {
    if (p.offsets[n] >= k) break;  // validate() reports it
    const auto count = p.symbols.size() * p.subcarriers(n).size();
    for (std::size_t i = 0; i < count; ++i) p.values.emplace_back(bit(rng) ? a : -a, bit(rng) ? a : -a);
  }
  p.validate();
  return p;
}

PilotPattern PilotPattern::make(PatternId id, std::size_t n_t, std::size_t k, std::size_t t, std::uint64_t seed) {
  std::vector<std::size_t> syms = id == PatternId::P2 ? std::vector<std::size_t>{2, 11}
                                                      : std::vector<std::size_t>{2, 5, 8, 11};
  return custom(pattern_name(id), n_t, k, t, std::move(syms), std::max<std::size_t>(4, n_t), seed);
}

PilotPattern PilotPattern::dense(std::size_t n_t, std::size_t k, std::size_t t, std::uint64_t seed) {
  std::vector<std::size_t> syms(t);
  for (std::size_t i = 0; i < t; ++i) syms[i] = i;
  return custom("dense", n_t, k, t, std::move(syms), n_t, seed);
}

void PilotPattern::validate() const {
  if (n_t == 0 || k == 0 || t == 0) throw std::invalid_argument("pilot pattern: empty grid");
  if (symbols.empty()) throw std::invalid_argument("pilot pattern: no pilot symbols");
  if (!std::is_sorted(symbols.begin(), symbols.end()) ||
      std::adjacent_find(symbols.begin(), symbols.end()) != symbols.end())
    throw std::invalid_argument("pilot pattern: symbols must be strictly ascending");
  if (symbols.back() >= t) throw std::invalid_argument("pilot pattern: symbol index beyond slot length");
  if (offsets.size() != n_t) throw std::invalid_argument("pilot pattern: one offset per antenna required");
  std::set<std::size_t> seen;
  for (std::size_t n = 0; n < n_t; ++n) {
    if (offsets[n] >= k)
      throw std::invalid_argument("pilot pattern: antenna " + std::to_string(n) + " has no pilot subcarrier");
    for (auto sc : subcarriers(n))
      if (!seen.insert(sc).second) throw std::invalid_argument("pilot pattern: combs of two antennas overlap");
  }
  std::size_t count = 0;
  for (std::size_t n = 0; n < n_t; ++n) count += symbols.size() * per_symbol(n);
  if (values.size() != count) throw std::invalid_argument("pilot pattern: value count mismatch");
  for (const auto& v : values)
    if (std::abs(std::abs(v) - 1) > 1e-12) throw std::invalid_argument("pilot pattern: values must be unit modulus");
}

Real noise_variance(Real snr_db) { return std::isinf(snr_db) && snr_db > 0 ? 0.0 : std::pow(10.0, -snr_db / 10); }

PilotObservation apply_pilots(const ChannelRealization& h, const PilotPattern& pattern, Real snr_db,
                              std::mt19937_64& rng) {
  if (h.n_t != pattern.n_t || h.k != pattern.k || h.t != pattern.t)
    throw std::invalid_argument("apply_pilots: pattern grid does not match channel");
  PilotObservation obs;
  obs.noise_var = noise_variance(snr_db);
  obs.y.resize(pattern.total());
  std::normal_distribution<Real> gauss(0, std::sqrt(obs.noise_var / 2));
  std::size_t idx = 0;
  for (std::size_t n = 0; n < pattern.n_t; ++n) {
    const auto scs = pattern.subcarriers(n);
    for (std::size_t si = 0; si < pattern.symbols.size(); ++si)
      for (std::size_t j = 0; j < scs.size(); ++j, ++idx) {
        Complex y = h.get(n, scs[j], pattern.symbols[si]) * pattern.values[idx];
        if (obs.noise_var > 0) y += Complex(gauss(rng), gauss(rng));
        obs.y[idx] = y;
      }
  }
  return obs;
}

}  // namespace pfmce
