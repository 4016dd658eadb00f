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

#ifndef QUAKENET_WEIGHTS_IO_HPP_
#define QUAKENET_WEIGHTS_IO_HPP_

// Weight archive layout, all fields little-endian:
//
//   "VGGW"            4 bytes magic
//   version           u32, currently 1
//   entry count       u32
//   per entry:
//     name length     u16
//     name            UTF-8 bytes
//     rank            u8
//     extents         rank x u32
//     values          product(extents) x IEEE-754 binary32
//   crc32             u32 over every preceding byte

#include <zlib.h>

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "quakenet/model.hpp"
#include "quakenet/tensor.hpp"

namespace quakenet {

inline constexpr char kArchiveMagic[4] = {'V', 'G', 'G', 'W'};
inline constexpr std::uint32_t kArchiveVersion = 1;

class ArchiveError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kVersionMismatch, kTruncated, kLengthMismatch, kChecksumMismatch, kMalformed };

  ArchiveError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ArchiveEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const ArchiveEntry&, const ArchiveEntry&) = default;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (size_ - pos_ < n) {
      throw ArchiveError(ArchiveError::Kind::kTruncated,
                         "archive truncated: needed " + std::to_string(n) + " bytes at offset " +
                             std::to_string(pos_) + ", " + std::to_string(size_ - pos_) +
                             " available");
    }
  }
  std::size_t position() const { return pos_; }

 private:
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

/// Serializes entries to the archive byte layout. Identical entries always
/// produce identical bytes.
inline std::vector<std::uint8_t> encode_archive(const std::vector<ArchiveEntry>& entries) {
  detail::ByteWriter w;
  w.raw(kArchiveMagic, 4);
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.name).second) {
      throw ArchiveError(ArchiveError::Kind::kMalformed, "duplicate entry name " + e.name);
    }
    if (e.name.size() > 0xffff) {
      throw ArchiveError(ArchiveError::Kind::kMalformed, "entry name too long");
    }
    if (e.shape.empty() || e.shape.size() > 0xff) {
      throw ArchiveError(ArchiveError::Kind::kMalformed, "entry " + e.name + " has invalid rank");
    }
    for (std::size_t extent : e.shape) {
      if (extent == 0 || extent > 0xffffffffu) {
        throw ArchiveError(ArchiveError::Kind::kMalformed,
                           "entry " + e.name + " has invalid extent");
      }
    }
    if (shape_numel(e.shape) != e.values.size()) {
      throw ArchiveError(ArchiveError::Kind::kMalformed,
                         "entry " + e.name + " value count does not match its shape");
    }
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.shape.size()));
    for (std::size_t extent : e.shape) w.u32(static_cast<std::uint32_t>(extent));
    for (float v : e.values) w.f32(v);
  }
  auto& bytes = w.bytes();
  w.u32(detail::crc32_of(bytes.data(), bytes.size()));
  return std::move(bytes);
}

/// Parses and verifies an archive. Failures are reported in this order:
/// truncated header, bad magic, unsupported version, entry data running past
/// the end (truncated), bytes left over (length mismatch), checksum.
inline std::vector<ArchiveEntry> decode_archive(const std::vector<std::uint8_t>& bytes) {
  using Kind = ArchiveError::Kind;
  constexpr std::size_t kHeader = 12;
  if (bytes.size() < kHeader + 4) {
    throw ArchiveError(Kind::kTruncated, "archive truncated: " + std::to_string(bytes.size()) +
                                             " bytes is shorter than the header");
  }
  if (std::memcmp(bytes.data(), kArchiveMagic, 4) != 0) {
    throw ArchiveError(Kind::kBadMagic, "bad magic: not a VGGW weight archive");
  }
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader r(bytes.data(), body);
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion) {
    throw ArchiveError(Kind::kVersionMismatch, "unsupported archive version " +
                                                   std::to_string(version) + " (expected " +
                                                   std::to_string(kArchiveVersion) + ")");
  }
  const std::uint32_t count = r.u32();
  std::vector<ArchiveEntry> entries;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    e.name = r.str(r.u16());
    const std::uint8_t rank = r.u8();
    if (rank == 0) throw ArchiveError(Kind::kMalformed, "entry " + e.name + " has rank 0");
    std::uint64_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t extent = r.u32();
      if (extent == 0) throw ArchiveError(Kind::kMalformed, "entry " + e.name + " has a zero extent");
      e.shape.push_back(extent);
      numel *= extent;
      if (numel > body) {
        throw ArchiveError(Kind::kTruncated, "archive truncated: entry " + e.name +
                                                 " declares more values than the file holds");
      }
    }
    r.need(static_cast<std::size_t>(numel) * 4);
    e.values.resize(static_cast<std::size_t>(numel));
    for (auto& v : e.values) v = r.f32();
    if (!seen.insert(e.name).second) {
      throw ArchiveError(Kind::kMalformed, "duplicate entry name " + e.name);
    }
    entries.push_back(std::move(e));
  }
  if (r.position() != body) {
    throw ArchiveError(Kind::kLengthMismatch,
                       "archive length mismatch: declared entries end at byte " +
                           std::to_string(r.position()) + " but the checksum starts at byte " +
                           std::to_string(body));
  }
  detail::ByteReader tail(bytes.data() + body, 4);
  const std::uint32_t stored = tail.u32();
  if (stored != detail::crc32_of(bytes.data(), body)) {
    throw ArchiveError(Kind::kChecksumMismatch, "checksum mismatch");
  }
  return entries;
}

inline void save_archive(const std::vector<ArchiveEntry>& entries, const std::string& path) {
  const auto bytes = encode_archive(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError(ArchiveError::Kind::kIo, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError(ArchiveError::Kind::kIo, "failed writing " + path);
}

inline std::vector<ArchiveEntry> load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError(ArchiveError::Kind::kIo, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

template <typename T>
ArchiveEntry to_entry(const std::string& name, const Tensor<T>& t) {
  return {name, t.shape(), std::vector<float>(t.begin(), t.end())};
}

/// Every parameter of the network, in network order.
template <typename T>
std::vector<ArchiveEntry> archive_from_network(const Network<T>& net) {
  std::vector<ArchiveEntry> entries;
  for (const auto& p : net.parameters()) entries.push_back(to_entry(p.name, *p.value));
  return entries;
}

/// Convolution parameters only, in network order.
template <typename T>
std::vector<ArchiveEntry> conv_entries_from_network(const Network<T>& net) {
  std::vector<ArchiveEntry> entries;
  for (const auto& p : net.parameters()) {
    if (is_conv_parameter(p.name)) entries.push_back(to_entry(p.name, *p.value));
  }
  return entries;
}

struct ImportRecord {
  std::string name;
  Shape shape;
};

namespace detail {

inline const ArchiveEntry* find_entry(const std::vector<ArchiveEntry>& entries,
                                      const std::string& name) {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
void assign_entry(Tensor<T>& dst, const ArchiveEntry& e) {
  if (e.shape != dst.shape()) {
    throw ArchiveError(ArchiveError::Kind::kMalformed,
                       "shape mismatch for " + e.name + ": expected " +
                           shape_to_string(dst.shape()) + ", found " + shape_to_string(e.shape));
  }
  std::copy(e.values.begin(), e.values.end(), dst.begin());
}

}  // namespace detail

/// Overwrites the convolution parameters from a pretrained archive. The
/// archive must hold exactly the network's convolution weights and biases;
/// missing tensors, shape mismatches and any extra entry are rejected before
/// anything is modified. Dense parameters are never touched.
template <typename T>
std::vector<ImportRecord> import_pretrained(Network<T>& net, const std::vector<ArchiveEntry>& entries) {
  using Kind = ArchiveError::Kind;
  auto params = net.parameters();
  std::set<std::string> expected;
  for (const auto& p : params) {
    if (!is_conv_parameter(p.name)) continue;
    expected.insert(p.name);
    const ArchiveEntry* e = detail::find_entry(entries, p.name);
    if (!e) throw ArchiveError(Kind::kMalformed, "pretrained archive is missing " + p.name);
    if (e->shape != p.value->shape()) {
      throw ArchiveError(Kind::kMalformed, "shape mismatch for " + p.name + ": expected " +
                                               shape_to_string(p.value->shape()) + ", found " +
                                               shape_to_string(e->shape));
    }
  }
  for (const auto& e : entries) {
    if (!expected.count(e.name)) {
      throw ArchiveError(Kind::kMalformed, "unexpected tensor " + e.name + " in pretrained archive");
    }
  }
  std::vector<ImportRecord> report;
  for (auto& p : params) {
    if (!is_conv_parameter(p.name)) continue;
    const ArchiveEntry* e = detail::find_entry(entries, p.name);
    detail::assign_entry(*p.value, *e);
    report.push_back({p.name, e->shape});
  }
  return report;
}

/// Restores every network parameter from a full archive. Reports the first
/// missing tensor in network order.
template <typename T>
void load_network_parameters(Network<T>& net, const std::vector<ArchiveEntry>& entries) {
  auto params = net.parameters();
  for (const auto& p : params) {
    if (!detail::find_entry(entries, p.name)) {
      throw ArchiveError(ArchiveError::Kind::kMalformed, "model archive is missing " + p.name);
    }
  }
  for (auto& p : params) detail::assign_entry(*p.value, *detail::find_entry(entries, p.name));
}

}  // namespace quakenet

#endif  // QUAKENET_WEIGHTS_IO_HPP_
