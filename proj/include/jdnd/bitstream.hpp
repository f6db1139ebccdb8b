/* Copyright 2026 The JDND Authors. All Rights Reserved.

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

// Little-endian container:
//
//   "JDND" | version u8 | config hash u64 | lambda index u8 | flags u8 |
//   H u32 | W u32 | z_len u32 | y_len u32 | z payload | y payload

#ifndef JDND_BITSTREAM_HPP_
#define JDND_BITSTREAM_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "jdnd/range_coder.hpp"
#include "jdnd/tensor.hpp"

namespace jdnd {

inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::size_t kHeaderBytes = 31;
inline constexpr std::uint8_t kFlagPadded = 1;

struct BitstreamHeader {
  std::uint8_t version = kBitstreamVersion;
  std::uint64_t config_hash = 0;
  std::uint8_t lambda_index = 0;
  std::uint8_t flags = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
};

struct Bitstream {
  BitstreamHeader header;
  std::vector<std::uint8_t> z_payload;
  std::vector<std::uint8_t> y_payload;

  std::size_t byte_size() const { return kHeaderBytes + z_payload.size() + y_payload.size(); }
};

std::vector<std::uint8_t> serialize(const Bitstream& bs);
/// Throws DecodeError on a bad magic, unknown version or length mismatch.
Bitstream parse_bitstream(const std::vector<std::uint8_t>& bytes);

void write_bitstream(const Bitstream& bs, const std::string& path);
Bitstream read_bitstream(const std::string& path);

/// 8 · bytes / (H · W), header included.
double bits_per_pixel(const Bitstream& bs);

}  // namespace jdnd

#endif  // JDND_BITSTREAM_HPP_
