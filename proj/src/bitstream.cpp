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

#include "jdnd/bitstream.hpp"

#include <fstream>
#include <iterator>

namespace jdnd {
namespace {

constexpr char kMagic[4] = {'J', 'D', 'N', 'D'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DecodeError("truncated header", pos);
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in[pos + i]) << (8 * i));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize(const Bitstream& bs) {
  std::vector<std::uint8_t> out;
  out.reserve(bs.byte_size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint8_t>(out, bs.header.version);
  put<std::uint64_t>(out, bs.header.config_hash);
  put<std::uint8_t>(out, bs.header.lambda_index);
  put<std::uint8_t>(out, bs.header.flags);
  put<std::uint32_t>(out, bs.header.height);
  put<std::uint32_t>(out, bs.header.width);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bs.z_payload.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bs.y_payload.size()));
  out.insert(out.end(), bs.z_payload.begin(), bs.z_payload.end());
  out.insert(out.end(), bs.y_payload.begin(), bs.y_payload.end());
  return out;
}

Bitstream parse_bitstream(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) throw DecodeError("truncated header", bytes.size());
  for (std::size_t i = 0; i < 4; ++i) {
    if (bytes[i] != static_cast<std::uint8_t>(kMagic[i])) throw DecodeError("bad magic", i);
  }
  std::size_t pos = 4;
  Bitstream bs;
  bs.header.version = get<std::uint8_t>(bytes, pos);
  if (bs.header.version != kBitstreamVersion) {
    throw DecodeError("unsupported bitstream version " + std::to_string(bs.header.version), 4);
  }
  bs.header.config_hash = get<std::uint64_t>(bytes, pos);
  bs.header.lambda_index = get<std::uint8_t>(bytes, pos);
  bs.header.flags = get<std::uint8_t>(bytes, pos);
  bs.header.height = get<std::uint32_t>(bytes, pos);
  bs.header.width = get<std::uint32_t>(bytes, pos);
  const auto z_len = get<std::uint32_t>(bytes, pos);
  const auto y_len = get<std::uint32_t>(bytes, pos);
  if (bs.header.height == 0 || bs.header.width == 0) throw DecodeError("empty image size", 18);
  const std::size_t need = kHeaderBytes + std::size_t{z_len} + std::size_t{y_len};
  if (bytes.size() < need) throw DecodeError("truncated payload", bytes.size());
  if (bytes.size() > need) throw DecodeError("trailing bytes after payload", need);
  bs.z_payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + z_len));
  pos += z_len;
  bs.y_payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return bs;
}

void write_bitstream(const Bitstream& bs, const std::string& path) {
  const auto bytes = serialize(bs);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path);
}

Bitstream read_bitstream(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_bitstream(bytes);
}

double bits_per_pixel(const Bitstream& bs) {
  return 8.0 * static_cast<double>(bs.byte_size()) /
         (static_cast<double>(bs.header.height) * static_cast<double>(bs.header.width));
}

}  // namespace jdnd
