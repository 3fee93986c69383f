// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfmce::io {

// Little-endian primitives independent of host byte order.

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void put_bytes(std::ostream& os, std::uint64_t v, int n) {
  char buf[8];
  for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, n);
}

inline std::uint64_t get_bytes(std::istream& is, int n) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), n)) throw FormatError("unexpected end of stream");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_u8(std::ostream& os, std::uint8_t v) { put_bytes(os, v, 1); }
inline void write_u32(std::ostream& os, std::uint32_t v) { put_bytes(os, v, 4); }
inline void write_u64(std::ostream& os, std::uint64_t v) { put_bytes(os, v, 8); }
inline void write_f32(std::ostream& os, float v) { put_bytes(os, std::bit_cast<std::uint32_t>(v), 4); }

inline std::uint8_t read_u8(std::istream& is) { return static_cast<std::uint8_t>(get_bytes(is, 1)); }
inline std::uint32_t read_u32(std::istream& is) { return static_cast<std::uint32_t>(get_bytes(is, 4)); }
inline std::uint64_t read_u64(std::istream& is) { return get_bytes(is, 8); }
inline float read_f32(std::istream& is) { return std::bit_cast<float>(static_cast<std::uint32_t>(get_bytes(is, 4))); }

inline void write_f32_array(std::ostream& os, const float* v, std::size_t n) {
  std::vector<char> buf(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = std::bit_cast<std::uint32_t>(v[i]);
    for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xff);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void read_f32_array(std::istream& is, float* v, std::size_t n) {
  std::vector<unsigned char> buf(4 * n);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw FormatError("unexpected end of stream");
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(buf[4 * i + b]) << (8 * b);
    v[i] = std::bit_cast<float>(u);
  }
}

inline void expect_magic(std::istream& is, const std::string& magic) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
    throw FormatError("bad magic, expected \"" + magic.substr(0, magic.size() - 1) + "\"");
}

}  // namespace pfmce::io
