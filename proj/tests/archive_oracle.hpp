/* Copyright 2026 The quakenet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Byte-level reference encoder for the weight archive, written against the
// file layout only, plus a random archive generator.

#ifndef QUAKENET_TESTS_ARCHIVE_ORACLE_HPP_
#define QUAKENET_TESTS_ARCHIVE_ORACLE_HPP_

#include <bit>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "quakenet/weights_io.hpp"

namespace quakenet::test {

/// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
inline std::uint32_t reference_crc32(const std::vector<std::uint8_t>& bytes) {
  std::uint32_t crc = 0xffffffffu;
  for (std::uint8_t b : bytes) {
    crc ^= b;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::vector<std::uint8_t> reference_encode(const std::vector<ArchiveEntry>& entries,
                                                  std::uint32_t version = 1) {
  std::vector<std::uint8_t> out = {'V', 'G', 'G', 'W'};
  put_le(out, version, 4);
  put_le(out, entries.size(), 4);
  for (const auto& e : entries) {
    put_le(out, e.name.size(), 2);
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_le(out, e.shape.size(), 1);
    for (std::size_t d : e.shape) put_le(out, d, 4);
    for (float v : e.values) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  put_le(out, reference_crc32(out), 4);
  return out;
}

/// Random entries with unique names, ranks 1-4 and arbitrary bit patterns
/// (including NaN payloads, infinities and signed zeros).
inline std::vector<ArchiveEntry> random_archive(std::mt19937_64& rng, std::size_t max_entries = 6) {
  std::uniform_int_distribution<std::size_t> count(0, max_entries), rank(1, 4), extent(1, 5), len(1, 24);
  std::uniform_int_distribution<std::uint32_t> bits;
  std::uniform_int_distribution<int> letter('a', 'z');
  std::vector<ArchiveEntry> entries;
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    ArchiveEntry e;
    e.name = "t" + std::to_string(i) + "_";
    for (std::size_t k = len(rng); k > 0; --k) e.name.push_back(static_cast<char>(letter(rng)));
    for (std::size_t r = rank(rng); r > 0; --r) e.shape.push_back(extent(rng));
    e.values.resize(shape_numel(e.shape));
    for (float& v : e.values) v = std::bit_cast<float>(bits(rng));
    entries.push_back(std::move(e));
  }
  return entries;
}

/// Bitwise entry comparison (NaN payloads included).
inline bool bit_identical(const std::vector<ArchiveEntry>& a, const std::vector<ArchiveEntry>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].shape != b[i].shape || a[i].values.size() != b[i].values.size()) {
      return false;
    }
    for (std::size_t j = 0; j < a[i].values.size(); ++j) {
      if (std::bit_cast<std::uint32_t>(a[i].values[j]) != std::bit_cast<std::uint32_t>(b[i].values[j])) {
        return false;
      }
    }
  }
  return true;
}

/// True when decoding `bytes` raises an ArchiveError.
inline bool rejected(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_archive(bytes);
  } catch (const ArchiveError&) {
    return true;
  }
  return false;
}

}  // namespace quakenet::test

#endif  // QUAKENET_TESTS_ARCHIVE_ORACLE_HPP_
