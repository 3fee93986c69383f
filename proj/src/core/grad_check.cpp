// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/core/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pfmce/core/adam.hpp"

namespace pfmce {

GradCheckReport grad_check(const std::function<Var(Graph&)>& loss, const NamedParameters& params,
                           const GradCheckOptions& options) {
  zero_grad(params);
  {
    Graph g;
    g.backward(loss(g));
  }
  auto evaluate = [&] {
    Graph g(false);
    return loss(g).value()[0];
  };

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (const auto& [name, p] : params) {
    if (!p->trainable) continue;
    std::vector<std::size_t> idx(p->value.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries_per_param != 0 && idx.size() > options.max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_entries_per_param);
    }
    for (auto i : idx) {
      const Real saved = p->value[i];
      p->value[i] = saved + options.step;
      const Real fp = evaluate();
      p->value[i] = saved - options.step;
      const Real fm = evaluate();
      p->value[i] = saved;
      const Real numeric = (fp - fm) / (2 * options.step);
      const Real analytic = p->grad[i];
      const Real denom = std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
      const Real rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<Real>::infinity();
        report.worst_param = name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace pfmce
