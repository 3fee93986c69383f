// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pfmce {

using Real = double;
using Shape = std::vector<std::size_t>;

/// Thrown when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces or receives non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major real array. A default-constructed tensor is "unset"
/// (no shape, no data); every constructed tensor has extents >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0);
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0); }
  /// i.i.d. N(0, stddev^2) entries.
  static Tensor randn(Shape shape, std::mt19937_64& rng, Real stddev = 1);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, Real lo, Real hi);
  static Tensor identity(std::size_t n);

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  Real at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  Real& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  Real at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Same data, new shape. Throws DimensionError when sizes differ.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(Real v);
  bool all_finite() const;
  Real max_abs() const;
  Real sum() const;

  /// Elementwise this += other (shapes must agree in size).
  void accumulate(const Tensor& other);

 private:
  Shape shape_;
  // Fixed alignment keeps Eigen's vectorized reductions on the same
  // summation order from run to run.
  std::vector<Real, Eigen::aligned_allocator<Real>> data_;
};

/// Largest |a_i - b_i|; throws DimensionError when sizes differ.
Real max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace pfmce
