// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "pfmce/core/graph.hpp"

namespace pfmce {

struct AdamOptions {
  Real learning_rate = 1e-3;
  Real weight_decay = 0;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

/// Optimizer state for one parameter list; moments are index-aligned with
/// the list passed to make_adam_state().
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

AdamState make_adam_state(const NamedParameters& params, AdamOptions options);

/// One Adam step with decoupled weight decay:
///   p <- p * (1 - lr * wd) - lr * mhat / (sqrt(vhat) + eps)
/// Frozen parameters are skipped entirely. All gradients are validated
/// before anything is modified; a non-finite gradient throws NumericError
/// naming the parameter.
void adam_step(const NamedParameters& params, AdamState& state);

void zero_grad(const NamedParameters& params);

}  // namespace pfmce
