// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <string>
#include <vector>

#include "pfmce/cli/sweep.hpp"

namespace pfmce {

struct ReportTable {
  std::string name;
  std::string csv;  // header + rows, one column per method
};

/// Pivots sweep rows into method-by-column tables:
///   nmse_vs_snr     speed_kmh,pattern,snr_db,<methods>   (all slots, profiles pooled)
///   nmse_vs_slot    snr_db,speed_kmh,pattern,slot,<methods>   (profiles pooled)
///   nmse_by_profile profile,speed_kmh,pattern,snr_db,<methods>   (all slots)
/// Cells are NMSE in dB with 6 significant digits, empty when a method has
/// no row there. Repeated rows (same method, point, profile, slot) must
/// agree and count once; conflicting ones throw.
std::vector<ReportTable> build_report(const std::vector<SweepRow>& rows);

}  // namespace pfmce
