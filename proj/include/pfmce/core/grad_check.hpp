// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "pfmce/core/graph.hpp"

namespace pfmce {

struct GradCheckOptions {
  Real step = 1e-5;
  /// 0 checks every entry; otherwise a seeded random subset per parameter.
  std::size_t max_entries_per_param = 0;
  /// Denominator floor: rel = |a - n| / max(|a|, |n|, abs_floor).
  Real abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  Real max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  Real analytic = 0;
  Real numeric = 0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of the scalar `loss` against central
/// finite differences for every trainable entry of `params`. `loss` must
/// build its graph from scratch on each call and bind params through
/// Graph::parameter.
GradCheckReport grad_check(const std::function<Var(Graph&)>& loss, const NamedParameters& params,
                           const GradCheckOptions& options = {});

}  // namespace pfmce
