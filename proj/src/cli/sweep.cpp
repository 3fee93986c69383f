// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/cli/sweep.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pfmce/core/parallel.hpp"
#include "pfmce/estimator/metrics.hpp"

namespace pfmce {

std::string method_name(Method m) {
  switch (m) {
    case Method::Linear: return "linear";
    case Method::Lmmse: return "lmmse";
    case Method::Vit: return "vit";
    case Method::PfmCe: return "pfm-ce";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (auto m : {Method::Linear, Method::Lmmse, Method::Vit, Method::PfmCe})
    if (method_name(m) == name) return m;
  throw std::invalid_argument("unknown method: " + name);
}

bool needs_weights(Method m) { return m == Method::Vit || m == Method::PfmCe; }

void EvalConfig::validate() const {
  channel.validate();
  if (trajectories == 0) throw std::invalid_argument("eval: trajectories must be >= 1");
}

namespace {

struct Point {
  ProfileId profile;
  Real speed, snr;
  PatternId pattern;
};

// nmse per slot for one trajectory and one method
std::vector<Real> run_method(Method m, PfmCe* model, const Trajectory& tr, const PilotPattern& pattern,
                             const CovarianceBank& bank, Interpolation interp) {
  const auto bucket = tr.params.bucket();
  const std::size_t slots = tr.slots.size();
  std::vector<Real> out;
  out.reserve(slots);
  switch (m) {
    case Method::Linear:
    case Method::Lmmse: {
      const auto how = m == Method::Linear ? Interpolation::Linear : Interpolation::Lmmse;
      for (std::size_t i = 0; i < slots; ++i)
        out.push_back(nmse(coarse_estimate(tr.observations[i], pattern, how, bank, bucket), tr.slots[i]));
      break;
    }
    case Method::Vit:
      for (std::size_t i = 0; i < slots; ++i) {
        SlotContext ctx;
        ctx.coarse = coarse_input(tr.observations[i], pattern, interp, bank, bucket);
        ctx.noise_var = tr.observations[i].noise_var;
        out.push_back(nmse(estimate_slot(*model, ctx), tr.slots[i].stacked()));
      }
      break;
    case Method::PfmCe: {
      std::vector<SlotInput> in;
      for (std::size_t i = 0; i < slots; ++i) in.push_back({tr.observations[i], tr.slots[i]});
      out = run_trajectory(*model, in, pattern, bank, bucket, interp).nmse;
      break;
    }
  }
  return out;
}

std::string format(Real v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

std::vector<SweepRow> run_sweep(const EvalConfig& cfg, const std::vector<Method>& methods, const ModelSet& models,
                                const CovarianceBank& bank) {
  cfg.validate();
  if (methods.empty()) throw std::invalid_argument("eval: no methods");
  for (auto m : methods) {
    if (!needs_weights(m)) continue;
    auto it = models.find(m);
    if (it == models.end() || !it->second) throw std::invalid_argument("eval: no weights for " + method_name(m));
    const auto& mc = it->second->config();
    if (mc.n_t != cfg.channel.n_t || mc.k != cfg.channel.k || mc.t != cfg.channel.t)
      throw DimensionError("eval: model grid does not match the channel grid");
  }
  const auto& ch = cfg.channel;
  std::vector<Point> points;
  for (auto p : ch.profiles)
    for (auto v : ch.speeds_kmh)
      for (auto s : ch.snrs_db)
        for (auto pat : ch.patterns) points.push_back({p, v, s, pat});

  const std::size_t per = cfg.trajectories, jobs = points.size() * per, nm = methods.size();
  // nmse[job][method][slot]
  std::vector<std::vector<std::vector<Real>>> res(jobs);
  parallel_for(jobs, cfg.threads, [&](std::size_t j) {
    const auto& pt = points[j / per];
    auto params = draw_params(ch, cfg.seed, j);
    params.profile = pt.profile;
    params.speed_kmh = pt.speed;
    params.snr_db = pt.snr;
    params.pattern = pt.pattern;
    const auto tr = simulate_trajectory(ch, params, mix_seed(cfg.seed, 3 * j + 1));
    const auto pattern = PilotPattern::make(pt.pattern, ch.n_t, ch.k, ch.t, ch.pilot_seed);
    res[j].resize(nm);
    for (std::size_t m = 0; m < nm; ++m) {
      auto it = models.find(methods[m]);
      res[j][m] = run_method(methods[m], it == models.end() ? nullptr : it->second, tr, pattern, bank, cfg.interp);
    }
  });

  std::vector<SweepRow> rows;
  for (std::size_t m = 0; m < nm; ++m)
    for (std::size_t p = 0; p < points.size(); ++p) {
      const auto& pt = points[p];
      SweepRow base;
      base.method = method_name(methods[m]);
      base.snr_db = pt.snr;
      base.speed_kmh = pt.speed;
      base.pattern = pattern_name(pt.pattern);
      base.profile = profile_name(pt.profile);
      NmseAccumulator pooled;
      std::vector<NmseAccumulator> by_slot(ch.slots);
      for (std::size_t j = p * per; j < (p + 1) * per; ++j)
        for (std::size_t s = 0; s < res[j][m].size(); ++s) {
          by_slot[s].add(res[j][m][s]);
          pooled.add(res[j][m][s]);
        }
      SweepRow all = base;
      all.slot = 0;
      all.nmse_db = pooled.mean_db();
      all.n = pooled.count();
      rows.push_back(all);
      for (std::size_t s = 0; s < ch.slots; ++s) {
        SweepRow r = base;
        r.slot = s + 1;
        r.nmse_db = by_slot[s].mean_db();
        r.n = by_slot[s].count();
        rows.push_back(r);
      }
    }
  for (const auto& r : rows)
    if (!std::isfinite(r.nmse_db) || r.n == 0) throw std::runtime_error("eval: non-finite NMSE for " + r.method);
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, const std::string& digest) {
  if (!digest.empty()) os << "# digest=" << digest << '\n';
  os << kSweepHeader << '\n';
  for (const auto& r : rows)
    os << r.method << ',' << format(r.snr_db) << ',' << format(r.speed_kmh) << ',' << r.pattern << ',' << r.profile
       << ',' << r.slot << ',' << format(r.nmse_db) << ',' << r.n << '\n';
}

void write_sweep_json(std::ostream& os, const std::vector<SweepRow>& rows, const std::string& digest) {
  std::ostringstream csv;
  write_sweep_csv(csv, rows, digest);
  write_json_mirror(os, csv.str());
}

void write_json_mirror(std::ostream& os, const std::string& csv) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  auto rows = nlohmann::ordered_json::array();
  std::vector<std::string> header;
  std::istringstream is(csv);
  for (std::string line; std::getline(is, line);) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      doc[key] = line.substr(eq + 1);
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (header.empty()) {
      header = cells;
      continue;
    }
    if (cells.size() != header.size()) throw std::runtime_error("csv row width differs from header: " + line);
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      // numeric cells become JSON numbers, the rest stay strings
      std::size_t pos = 0;
      double v = 0;
      bool numeric = false;
      try {
        v = std::stod(cells[i], &pos);
        numeric = pos == cells[i].size() && std::isfinite(v);
      } catch (const std::exception&) {
      }
      if (numeric && cells[i].find_first_of(".eE") == std::string::npos && cells[i][0] != '-')
        row[header[i]] = std::stoull(cells[i]);
      else if (numeric)
        row[header[i]] = v;
      else
        row[header[i]] = cells[i];
    }
    rows.push_back(std::move(row));
  }
  doc["columns"] = header;
  doc["rows"] = std::move(rows);
  os << doc.dump(2) << '\n';
}

std::vector<SweepRow> read_sweep_csv(std::istream& is) {
  std::vector<SweepRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kSweepHeader) throw std::runtime_error("sweep csv: unexpected header: " + line);
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw std::runtime_error("sweep csv: expected 8 fields: " + line);
    SweepRow r;
    r.method = f[0];
    r.snr_db = std::stod(f[1]);
    r.speed_kmh = std::stod(f[2]);
    r.pattern = f[3];
    r.profile = f[4];
    r.slot = std::stoul(f[5]);
    r.nmse_db = std::stod(f[6]);
    r.n = std::stoul(f[7]);
    rows.push_back(std::move(r));
  }
  if (!header) throw std::runtime_error("sweep csv: missing header");
  return rows;
}

Real pooled_nmse_db(const std::vector<SweepRow>& rows, const std::string& method, Real snr_db, Real speed_kmh,
                    const std::string& pattern, std::size_t slot) {
  Real sum = 0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.method == method && r.snr_db == snr_db && r.speed_kmh == speed_kmh && r.pattern == pattern &&
        r.slot == slot) {
      sum += std::pow(10.0, r.nmse_db / 10.0) * static_cast<Real>(r.n);
      n += r.n;
    }
  if (n == 0) throw std::out_of_range("no sweep row for " + method);
  return to_db(sum / static_cast<Real>(n));
}

}  // namespace pfmce
