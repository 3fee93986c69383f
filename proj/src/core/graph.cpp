// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/core/graph.hpp"

namespace pfmce {

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad_if_any(id_); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  const bool rg = record_ && p.trainable;
  nodes_.push_back(Node{p.value, {}, {}, rg ? &p : nullptr, rg});
  return Var(this, nodes_.size() - 1);
}

Var Graph::emit(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  bool rg = false;
  if (record_) {
    for (const auto& in : inputs) rg = rg || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, rg ? std::move(backward) : Backward{}, nullptr, rg});
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (!record_) throw std::logic_error("backward() on a non-recording graph");
  if (loss.value().size() != 1) throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id()).fill(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      if (n.param->grad.empty()) n.param->zero_grad();
      n.param->grad.accumulate(n.grad);
    }
  }
}

}  // namespace pfmce
