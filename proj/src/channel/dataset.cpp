// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/channel/dataset.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pfmce/core/binary_io.hpp"
#include "pfmce/core/parallel.hpp"

namespace pfmce {

void DatasetConfig::validate() const {
  if (n_t == 0 || k == 0 || t == 0) throw std::invalid_argument("dataset: n_t, k, t must be >= 1");
  if (slots < 2) throw std::invalid_argument("dataset: slots must be >= 2");
  if (profiles.empty() || speeds_kmh.empty() || snrs_db.empty() || patterns.empty() || correlations.empty() ||
      scs_khz.empty())
    throw std::invalid_argument("dataset: every range must have at least one value");
  for (const auto& c : correlations) SpatialCorrelation::make(c, n_t);
}

std::string DatasetConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "n_t=" << n_t << ";k=" << k << ";t=" << t << ";slots=" << slots << ";trajectories=" << trajectories
     << ";profiles=";
  for (auto p : profiles) os << profile_name(p) << ',';
  os << ";speeds=";
  for (auto v : speeds_kmh) os << v << ',';
  os << ";snrs=";
  for (auto v : snrs_db) os << v << ',';
  os << ";patterns=";
  for (auto p : patterns) os << pattern_name(p) << ',';
  os << ";correlations=";
  for (const auto& c : correlations) os << c << ',';
  os << ";scs=";
  for (auto v : scs_khz) os << v << ',';
  os << ";carrier=" << carrier_ghz << ";pilot_seed=" << pilot_seed << ";calibration=" << calibration_samples;
  return os.str();
}

Digest config_digest(const DatasetConfig& cfg, std::uint64_t seed) {
  return sha256(cfg.canonical() + ";seed=" + std::to_string(seed));
}

namespace {

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

TrajectoryParams draw_params(const DatasetConfig& cfg, std::uint64_t seed, std::size_t index) {
  std::mt19937_64 rng(mix_seed(seed, 3 * index));
  TrajectoryParams p;
  p.profile = pick(cfg.profiles, rng);
  p.speed_kmh = pick(cfg.speeds_kmh, rng);
  p.snr_db = pick(cfg.snrs_db, rng);
  p.pattern = pick(cfg.patterns, rng);
  p.correlation = pick(cfg.correlations, rng);
  p.scs_khz = pick(cfg.scs_khz, rng);
  return p;
}

Trajectory simulate_trajectory(const DatasetConfig& cfg, const TrajectoryParams& params, std::uint64_t seed) {
  Trajectory tr;
  tr.params = params;
  const auto mob = MobilityConfig::from_kmh(params.speed_kmh, cfg.carrier_ghz * 1e9, params.scs_khz * 1e3);
  tr.slots = generate_trajectory(TdlProfile::make(params.profile), mob,
                                 SpatialCorrelation::make(params.correlation, cfg.n_t), cfg.n_t, cfg.k, cfg.t,
                                 cfg.slots, mix_seed(seed, 1));
  const auto pattern = PilotPattern::make(params.pattern, cfg.n_t, cfg.k, cfg.t, cfg.pilot_seed);
  std::mt19937_64 noise(mix_seed(seed, 2));
  for (const auto& h : tr.slots) tr.observations.push_back(apply_pilots(h, pattern, params.snr_db, noise));
  return tr;
}

Trajectory draw_trajectory(const DatasetConfig& cfg, std::uint64_t seed, std::size_t index) {
  return simulate_trajectory(cfg, draw_params(cfg, seed, index), mix_seed(seed, 3 * index + 1));
}

CovarianceBank calibrate_covariances(const DatasetConfig& cfg, std::uint64_t seed, std::size_t threads) {
  const std::size_t per = (cfg.calibration_samples + cfg.slots - 1) / cfg.slots;
  struct Job {
    ProfileId profile;
    Real speed;
    std::size_t rep;
  };
  std::vector<Job> jobs;
  for (auto p : cfg.profiles)
    for (auto s : cfg.speeds_kmh)
      for (std::size_t r = 0; r < per; ++r) jobs.push_back({p, s, r});
  std::vector<std::vector<ChannelRealization>> channels(jobs.size());
  const std::uint64_t base = mix_seed(seed, 0xca11b);
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    std::mt19937_64 rng(mix_seed(base, i));
    const auto mob = MobilityConfig::from_kmh(jobs[i].speed, cfg.carrier_ghz * 1e9, pick(cfg.scs_khz, rng) * 1e3);
    const auto corr = SpatialCorrelation::make(pick(cfg.correlations, rng), cfg.n_t);
    channels[i] = generate_trajectory(TdlProfile::make(jobs[i].profile), mob, corr, cfg.n_t, cfg.k, cfg.t, cfg.slots,
                                      rng());
  });
  std::vector<LabeledChannel> labeled;
  for (std::size_t i = 0; i < jobs.size(); ++i)
    for (const auto& h : channels[i])
      for (auto pat : cfg.patterns)
        labeled.push_back({CovarianceBank::bucket_key(jobs[i].profile, jobs[i].speed, pat), &h});
  // The pooled bucket sees each realization once per pattern; harmless
  // for a covariance estimate.
  return estimate_covariances(labeled, std::min<std::size_t>(cfg.calibration_samples, per * cfg.slots));
}

ChannelRealization coarse_estimate(const PilotObservation& obs, const PilotPattern& pattern, Interpolation interp,
                                   const CovarianceBank& bank, const std::string& bucket) {
  const auto ls = ls_at_pilots(obs, pattern);
  if (interp == Interpolation::Linear) return interpolate_linear(ls);
  return lmmse_interpolate(ls, bank.lookup(bucket), obs.noise_var);
}

namespace {

std::vector<float> to_f32(const std::vector<Real>& re, const std::vector<Real>& im) {
  std::vector<float> out;
  out.reserve(re.size() + im.size());
  for (auto v : re) out.push_back(static_cast<float>(v));
  for (auto v : im) out.push_back(static_cast<float>(v));
  return out;
}

Tensor from_f32(const std::vector<float>& v, Shape shape) {
  std::vector<Real> d(v.begin(), v.end());
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace

Tensor Dataset::coarse(std::size_t i) const {
  return from_f32(records.at(i).coarse, {2 * header.n_t, header.k, header.t});
}
Tensor Dataset::history(std::size_t i) const {
  return from_f32(records.at(i).history, {2 * header.n_t * header.k, header.t});
}
Tensor Dataset::truth(std::size_t i) const {
  return from_f32(records.at(i).truth, {2 * header.n_t * header.k, header.t});
}

Dataset build_dataset(const DatasetConfig& cfg, std::uint64_t seed, const CovarianceBank& bank, std::size_t threads) {
  cfg.validate();
  Dataset ds;
  ds.header = {cfg.n_t, cfg.k, cfg.t, cfg.records(), config_digest(cfg, seed)};
  ds.records.resize(cfg.records());
  const std::size_t per = cfg.records_per_trajectory();
  parallel_for(cfg.trajectories, threads, [&](std::size_t j) {
    const auto tr = draw_trajectory(cfg, seed, j);
    const auto pattern = PilotPattern::make(tr.params.pattern, cfg.n_t, cfg.k, cfg.t, cfg.pilot_seed);
    const auto bucket = tr.params.bucket();
    for (std::size_t i = 1; i < cfg.slots; ++i) {
      const std::size_t r = j * per + (i - 1);
      auto& rec = ds.records[r];
      rec.snr_db = static_cast<float>(tr.params.snr_db);
      rec.pattern = tr.params.pattern;
      rec.profile = tr.params.profile;
      rec.speed_kmh = static_cast<float>(tr.params.speed_kmh);
      const auto interp = r % 2 == 0 ? Interpolation::Linear : Interpolation::Lmmse;
      const auto cur = coarse_estimate(tr.observations[i], pattern, interp, bank, bucket);
      const auto his = coarse_estimate(tr.observations[i - 1], pattern, Interpolation::Lmmse, bank, bucket);
      rec.coarse = to_f32(cur.re, cur.im);
      rec.history = to_f32(his.re, his.im);
      rec.truth = to_f32(tr.slots[i].re, tr.slots[i].im);
    }
  });
  return ds;
}

void write_dataset(std::ostream& os, const Dataset& ds) {
  const auto& h = ds.header;
  if (h.count != ds.records.size()) throw std::invalid_argument("dataset header count does not match records");
  os.write(kDatasetMagic, sizeof(kDatasetMagic) - 1);
  io::write_u32(os, static_cast<std::uint32_t>(h.n_t));
  io::write_u32(os, static_cast<std::uint32_t>(h.k));
  io::write_u32(os, static_cast<std::uint32_t>(h.t));
  io::write_u64(os, h.count);
  os.write(reinterpret_cast<const char*>(h.digest.data()), static_cast<std::streamsize>(h.digest.size()));
  const std::size_t n = 2 * h.n_t * h.k * h.t;
  for (const auto& r : ds.records) {
    if (r.coarse.size() != n || r.history.size() != n || r.truth.size() != n)
      throw DimensionError("dataset record size does not match header");
    io::write_f32(os, r.snr_db);
    io::write_u8(os, static_cast<std::uint8_t>(r.pattern));
    io::write_u8(os, static_cast<std::uint8_t>(r.profile));
    io::write_f32(os, r.speed_kmh);
    for (const auto* v : {&r.coarse, &r.history, &r.truth}) io::write_f32_array(os, v->data(), v->size());
  }
}

Dataset read_dataset(std::istream& is) {
  io::expect_magic(is, kDatasetMagic);
  Dataset ds;
  auto& h = ds.header;
  h.n_t = io::read_u32(is);
  h.k = io::read_u32(is);
  h.t = io::read_u32(is);
  h.count = io::read_u64(is);
  if (!is.read(reinterpret_cast<char*>(h.digest.data()), static_cast<std::streamsize>(h.digest.size())))
    throw io::FormatError("truncated dataset header");
  if (h.n_t == 0 || h.k == 0 || h.t == 0) throw io::FormatError("dataset header has an empty grid");
  const std::size_t n = 2 * h.n_t * h.k * h.t;
  ds.records.resize(h.count);
  for (auto& r : ds.records) {
    r.snr_db = io::read_f32(is);
    const auto pat = io::read_u8(is), prof = io::read_u8(is);
    if (pat > 1 || prof > 3) throw io::FormatError("dataset record has an invalid pattern or profile id");
    r.pattern = static_cast<PatternId>(pat);
    r.profile = static_cast<ProfileId>(prof);
    r.speed_kmh = io::read_f32(is);
    for (auto* v : {&r.coarse, &r.history, &r.truth}) {
      v->resize(n);
      io::read_f32_array(is, v->data(), n);
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw io::FormatError("trailing bytes after dataset records");
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(os, ds);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_dataset(is);
}

}  // namespace pfmce
