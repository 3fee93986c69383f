// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <vector>

#include "pfmce/channel/channel.hpp"

namespace pfmce {

/// ||est - ref||^2 / ||ref||^2; throws std::invalid_argument when ref is 0.
Real nmse(const Tensor& est, const Tensor& ref);
Real nmse(const ChannelRealization& est, const ChannelRealization& ref);
Real to_db(Real linear);

/// Batch mean of per-sample NMSE values.
class NmseAccumulator {
 public:
  void add(Real value) {
    sum_ += value;
    ++n_;
  }
  std::size_t count() const { return n_; }
  Real mean() const { return n_ ? sum_ / static_cast<Real>(n_) : 0; }
  Real mean_db() const { return to_db(mean()); }

 private:
  Real sum_ = 0;
  std::size_t n_ = 0;
};

}  // namespace pfmce
