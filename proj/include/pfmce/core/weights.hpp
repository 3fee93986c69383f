// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pfmce/core/graph.hpp"

namespace pfmce {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Magic at the start of every weight container.
inline constexpr char kWeightsMagic[] = "PFMW1\n";

// Weight container layout, all little-endian:
//   "PFMW1\n"
//   repeated until EOF:
//     u32 name length, UTF-8 name bytes,
//     u32 rank, u32 extent * rank,
//     f32 payload, row-major
void write_weights(std::ostream& os, const NamedTensors& tensors);
NamedTensors read_weights(std::istream& is);
void save_weights(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_weights(const std::filesystem::path& path);

NamedTensors snapshot(const NamedParameters& params);

/// Copies tensors into same-named parameters. Shape mismatches throw
/// DimensionError; with require_all, a parameter absent from `tensors`
/// throws std::invalid_argument. Returns the number of parameters set.
std::size_t assign(const NamedParameters& params, const NamedTensors& tensors, bool require_all = true);

std::optional<Tensor> find_tensor(const NamedTensors& tensors, const std::string& name);

}  // namespace pfmce
