// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/core/adam.hpp"

#include <cmath>

namespace pfmce {

AdamState make_adam_state(const NamedParameters& params, AdamOptions options) {
  AdamState s;
  s.options = options;
  for (const auto& [name, p] : params) {
    s.first_moment.push_back(Tensor::zeros_like(p->value));
    s.second_moment.push_back(Tensor::zeros_like(p->value));
  }
  return s;
}

void adam_step(const NamedParameters& params, AdamState& state) {
  if (state.first_moment.size() != params.size())
    throw DimensionError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (!p->trainable) continue;
    if (p->grad.empty()) p->zero_grad();
    if (p->grad.size() != p->value.size() || state.first_moment[i].size() != p->value.size())
      throw DimensionError("adam_step: shape mismatch for " + name);
    if (!p->grad.all_finite()) throw NumericError("adam_step: non-finite gradient in " + name);
  }

  const auto& o = state.options;
  ++state.step;
  const Real t = static_cast<Real>(state.step);
  const Real bc1 = 1 - std::pow(o.beta1, t);
  const Real bc2 = 1 - std::pow(o.beta2, t);
  const Real decay = 1 - o.learning_rate * o.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i].second;
    if (!p.trainable) continue;
    Real* m = state.first_moment[i].data();
    Real* v = state.second_moment[i].data();
    const Real* g = p.grad.data();
    Real* w = p.value.data();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1 - o.beta2) * g[j] * g[j];
      const Real mhat = m[j] / bc1;
      const Real vhat = v[j] / bc2;
      w[j] = w[j] * decay - o.learning_rate * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

void zero_grad(const NamedParameters& params) {
  for (const auto& [name, p] : params) p->zero_grad();
}

}  // namespace pfmce
