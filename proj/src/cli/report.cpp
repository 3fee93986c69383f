// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "pfmce/estimator/metrics.hpp"

namespace pfmce {

namespace {

struct Cell {
  Real sum = 0;  // n-weighted linear NMSE
  std::size_t n = 0;
};

std::string fmt(Real v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// key columns -> method -> cell
using Pivot = std::map<std::vector<std::string>, std::map<std::string, Cell>>;

// numeric-aware ordering of key tuples
struct KeyLess {
  bool operator()(const std::vector<std::string>& a, const std::vector<std::string>& b) const {
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
      if (a[i] == b[i]) continue;
      char* ea = nullptr;
      char* eb = nullptr;
      const double x = std::strtod(a[i].c_str(), &ea), y = std::strtod(b[i].c_str(), &eb);
      if (*ea == '\0' && *eb == '\0') return x < y;
      return a[i] < b[i];
    }
    return a.size() < b.size();
  }
};

std::string render(const std::string& header, const std::vector<std::string>& methods,
                   const std::map<std::vector<std::string>, std::map<std::string, Cell>, KeyLess>& pivot) {
  std::ostringstream os;
  os << header;
  for (const auto& m : methods) os << ',' << m;
  os << '\n';
  for (const auto& [key, cells] : pivot) {
    for (std::size_t i = 0; i < key.size(); ++i) os << (i ? "," : "") << key[i];
    for (const auto& m : methods) {
      os << ',';
      auto it = cells.find(m);
      if (it != cells.end() && it->second.n) os << fmt(to_db(it->second.sum / static_cast<Real>(it->second.n)));
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::vector<ReportTable> build_report(const std::vector<SweepRow>& rows) {
  std::vector<std::string> methods;
  std::map<std::tuple<std::string, Real, Real, std::string, std::string, std::size_t>, const SweepRow*> seen;
  std::vector<const SweepRow*> unique;
  for (const auto& r : rows) {
    auto [it, fresh] = seen.emplace(std::tuple{r.method, r.snr_db, r.speed_kmh, r.pattern, r.profile, r.slot}, &r);
    if (!fresh) {
      if (it->second->nmse_db != r.nmse_db || it->second->n != r.n)
        throw std::invalid_argument("report: conflicting rows for " + r.method + " at slot " + std::to_string(r.slot));
      continue;
    }
    unique.push_back(&r);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::map<std::vector<std::string>, std::map<std::string, Cell>, KeyLess> by_snr, by_slot, by_profile;
  for (const SweepRow* row : unique) {
    const auto& r = *row;
    const Real lin = std::pow(10.0, r.nmse_db / 10.0) * static_cast<Real>(r.n);
    auto add = [&](auto& pivot, std::vector<std::string> key) {
      auto& c = pivot[std::move(key)][r.method];
      c.sum += lin;
      c.n += r.n;
    };
    if (r.slot == 0) {
      add(by_snr, {fmt(r.speed_kmh), r.pattern, fmt(r.snr_db)});
      add(by_profile, {r.profile, fmt(r.speed_kmh), r.pattern, fmt(r.snr_db)});
    } else {
      add(by_slot, {fmt(r.snr_db), fmt(r.speed_kmh), r.pattern, std::to_string(r.slot)});
    }
  }
  return {{"nmse_vs_snr", render("speed_kmh,pattern,snr_db", methods, by_snr)},
          {"nmse_vs_slot", render("snr_db,speed_kmh,pattern,slot", methods, by_slot)},
          {"nmse_by_profile", render("profile,speed_kmh,pattern,snr_db", methods, by_profile)}};
}

}  // namespace pfmce
