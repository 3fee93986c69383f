// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pfmce/channel/dataset.hpp"
#include "pfmce/estimator/estimator.hpp"

namespace pfmce {

enum class Method : std::uint8_t { Linear, Lmmse, Vit, PfmCe };

std::string method_name(Method m);
Method parse_method(const std::string& name);
bool needs_weights(Method m);

struct EvalConfig {
  /// Grid shape, slots per trajectory, correlation/scs ranges and pilot seed.
  /// Its profile/speed/snr/pattern lists define the sweep axes.
  DatasetConfig channel;
  std::size_t trajectories = 50;  // per grid point
  std::uint64_t seed = 1000;
  /// Interpolation feeding the neural methods.
  Interpolation interp = Interpolation::Lmmse;
  std::size_t threads = 1;

  void validate() const;
};

struct SweepRow {
  std::string method;
  Real snr_db = 0, speed_kmh = 0;
  std::string pattern, profile;
  std::size_t slot = 0;  // 1-based; 0 = all slots pooled
  Real nmse_db = 0;
  std::size_t n = 0;
};

inline constexpr char kSweepHeader[] = "method,snr_db,speed_kmh,pattern,profile,slot,nmse_db,n";

/// Neural models by method; vit runs its pilot net on every slot, pfm-ce
/// runs the slot-recursive workflow.
using ModelSet = std::map<Method, PfmCe*>;

/// Fresh trajectories per (profile, speed, snr, pattern), identical across
/// methods. Rows are sorted by (method, profile, speed, snr, pattern, slot).
std::vector<SweepRow> run_sweep(const EvalConfig& cfg, const std::vector<Method>& methods, const ModelSet& models,
                                const CovarianceBank& bank);

/// 6 significant digits; `digest` goes in a leading "# digest=" line when
/// non-empty.
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, const std::string& digest = "");
void write_sweep_json(std::ostream& os, const std::vector<SweepRow>& rows, const std::string& digest = "");
/// JSON form of any CSV written by this tool: "# key=value" lines become
/// top-level fields, then "columns" and "rows" (numeric cells as numbers).
void write_json_mirror(std::ostream& os, const std::string& csv);
/// Reads what write_sweep_csv writes; comment lines are skipped.
std::vector<SweepRow> read_sweep_csv(std::istream& is);

/// NMSE (dB) of one method at (snr, speed, pattern, slot), pooled over
/// profiles with weights n. Throws if no row matches.
Real pooled_nmse_db(const std::vector<SweepRow>& rows, const std::string& method, Real snr_db, Real speed_kmh,
                    const std::string& pattern, std::size_t slot = 0);

}  // namespace pfmce
