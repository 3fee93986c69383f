// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/estimator/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace pfmce {

namespace {

Real ratio(const Real* e, const Real* r, std::size_t n) {
  Real num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (e[i] - r[i]) * (e[i] - r[i]);
    den += r[i] * r[i];
  }
  if (den == 0) throw std::invalid_argument("nmse: reference has zero energy");
  return num / den;
}

}  // namespace

Real nmse(const Tensor& est, const Tensor& ref) {
  if (est.size() != ref.size()) throw DimensionError("nmse: " + shape_str(est.shape()) + " vs " + shape_str(ref.shape()));
  return ratio(est.data(), ref.data(), ref.size());
}

Real nmse(const ChannelRealization& est, const ChannelRealization& ref) {
  if (est.size() != ref.size()) throw DimensionError("nmse: channel grids differ");
  Real num = 0, den = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += std::norm(Complex(est.re[i] - ref.re[i], est.im[i] - ref.im[i]));
    den += std::norm(Complex(ref.re[i], ref.im[i]));
  }
  if (den == 0) throw std::invalid_argument("nmse: reference has zero energy");
  return num / den;
}

Real to_db(Real linear) { return 10 * std::log10(linear); }

}  // namespace pfmce
