// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/core/weights.hpp"

#include <fstream>
#include <algorithm>
#include <map>

#include "pfmce/core/binary_io.hpp"

namespace pfmce {

void write_weights(std::ostream& os, const NamedTensors& tensors) {
  os.write(kWeightsMagic, sizeof(kWeightsMagic) - 1);
  for (const auto& [name, t] : tensors) {
    io::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) io::write_u32(os, static_cast<std::uint32_t>(e));
    std::vector<float> f(t.values().begin(), t.values().end());
    io::write_f32_array(os, f.data(), f.size());
  }
}

NamedTensors read_weights(std::istream& is) {
  io::expect_magic(is, kWeightsMagic);
  NamedTensors out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto len = io::read_u32(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw io::FormatError("truncated tensor name");
    const auto rank = io::read_u32(is);
    if (rank == 0 || rank > 8) throw io::FormatError("tensor '" + name + "' has invalid rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = io::read_u32(is);
    Tensor t(shape);
    std::vector<float> f(t.size());
    io::read_f32_array(is, f.data(), f.size());
    std::copy(f.begin(), f.end(), t.data());
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void save_weights(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_weights(os, tensors);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

NamedTensors load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_weights(is);
}

NamedTensors snapshot(const NamedParameters& params) {
  NamedTensors out;
  out.reserve(params.size());
  for (const auto& [name, p] : params) out.emplace_back(name, p->value);
  return out;
}

std::size_t assign(const NamedParameters& params, const NamedTensors& tensors, bool require_all) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  std::size_t n = 0;
  for (const auto& [name, p] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      if (require_all) throw std::invalid_argument("weights missing parameter '" + name + "'");
      continue;
    }
    if (it->second->shape() != p->value.shape())
      throw DimensionError("parameter '" + name + "' expects " + shape_str(p->value.shape()) + ", container has " +
                           shape_str(it->second->shape()));
    p->value = *it->second;
    ++n;
  }
  return n;
}

std::optional<Tensor> find_tensor(const NamedTensors& tensors, const std::string& name) {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  return std::nullopt;
}

}  // namespace pfmce
