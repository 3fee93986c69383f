// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/core/layers.hpp"

#include <cmath>

namespace pfmce {

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool bias)
    : weight(Tensor::randn({in, out}, rng, 1 / std::sqrt(static_cast<Real>(in)))),
      bias(Tensor::zeros({out})),
      has_bias(bias) {}

Var Linear::operator()(Graph& g, Var x) {
  Var w = g.parameter(weight);
  if (!has_bias) return ops::linear(x, w);
  return ops::linear(x, w, g.parameter(bias));
}

void Linear::collect(NamedParameters& out, const std::string& prefix) {
  out.emplace_back(prefix + "/w", &weight);
  if (has_bias) out.emplace_back(prefix + "/b", &bias);
}

void Linear::zero() {
  weight.value.fill(0);
  bias.value.fill(0);
}

LayerNorm::LayerNorm(std::size_t width) : gamma(Tensor({width}, 1)), beta(Tensor::zeros({width})) {}

Var LayerNorm::operator()(Graph& g, Var x) { return ops::layer_norm(x, g.parameter(gamma), g.parameter(beta)); }

void LayerNorm::collect(NamedParameters& out, const std::string& prefix) {
  out.emplace_back(prefix + "/gamma", &gamma);
  out.emplace_back(prefix + "/beta", &beta);
}

AdaLayerNorm::AdaLayerNorm(std::size_t width, std::mt19937_64& rng, std::size_t hidden_width)
    : width(width), hidden(1, hidden_width, rng), modulation(hidden_width, 2 * width, rng) {
  modulation.zero();
}

Var AdaLayerNorm::operator()(Graph& g, Var x, Var condition, std::size_t rows_per_condition) {
  Var mod = modulation(g, ops::gelu(hidden(g, condition)));
  return ops::ada_layer_norm(x, mod, rows_per_condition);
}

void AdaLayerNorm::collect(NamedParameters& out, const std::string& prefix) {
  hidden.collect(out, prefix + "/cond1");
  modulation.collect(out, prefix + "/cond2");
}

ResidualBlock::ResidualBlock(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng)
    : fc1(in, hidden, rng), fc2(hidden, out, rng), use_skip(in != out) {
  if (use_skip) skip = Linear(in, out, rng);
}

Var ResidualBlock::operator()(Graph& g, Var x) {
  Var h = fc2(g, ops::gelu(fc1(g, x)));
  return ops::add(h, use_skip ? skip(g, x) : x);
}

void ResidualBlock::collect(NamedParameters& out, const std::string& prefix) {
  fc1.collect(out, prefix + "/fc1");
  fc2.collect(out, prefix + "/fc2");
  if (use_skip) skip.collect(out, prefix + "/skip");
}

void ResidualBlock::zero() {
  fc1.zero();
  fc2.zero();
  if (use_skip) skip.zero();
}

MultiHeadAttention::MultiHeadAttention(std::size_t width, std::size_t heads, std::mt19937_64& rng)
    : heads(heads),
      wq(width, width, rng, false),
      wk(width, width, rng, false),
      wv(width, width, rng, false),
      wo(width, width, rng, false) {
  if (heads == 0 || width % heads != 0)
    throw DimensionError("attention width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                         " heads");
}

Var MultiHeadAttention::operator()(Graph& g, Var x, const AttentionLayout& layout, bool causal) {
  Var a = ops::attention(wq(g, x), wk(g, x), wv(g, x), layout, heads, causal);
  return wo(g, a);
}

void MultiHeadAttention::collect(NamedParameters& out, const std::string& prefix) {
  out.emplace_back(prefix + "/wq", &wq.weight);
  out.emplace_back(prefix + "/wk", &wk.weight);
  out.emplace_back(prefix + "/wv", &wv.weight);
  out.emplace_back(prefix + "/wo", &wo.weight);
}

Conv2d::Conv2d(std::size_t k, std::size_t in, std::size_t out, std::mt19937_64& rng)
    : kernel(Tensor::randn({k, k, in, out}, rng, 1 / std::sqrt(static_cast<Real>(k * k * in)))),
      bias(Tensor::zeros({out})) {}

Var Conv2d::operator()(Graph& g, Var x) {
  return ops::add_bias(ops::conv2d(x, g.parameter(kernel)), g.parameter(bias));
}

void Conv2d::collect(NamedParameters& out, const std::string& prefix) {
  out.emplace_back(prefix + "/kernel", &kernel);
  out.emplace_back(prefix + "/b", &bias);
}

Tensor sinusoidal_encoding(std::size_t positions, std::size_t width) {
  Tensor pe({positions, width});
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t c = 0; c < width; ++c) {
      const Real freq = std::pow(10000.0, -static_cast<Real>(c - c % 2) / static_cast<Real>(width));
      pe.at(p, c) = (c % 2 == 0) ? std::sin(static_cast<Real>(p) * freq) : std::cos(static_cast<Real>(p) * freq);
    }
  return pe;
}

}  // namespace pfmce
