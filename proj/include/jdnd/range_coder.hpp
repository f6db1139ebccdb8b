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

// Byte-oriented range coder over 16-bit quantized CDFs.

#ifndef JDND_RANGE_CODER_HPP_
#define JDND_RANGE_CODER_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jdnd {

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;
/// Symbols are integers in [-kAlphabetRadius, kAlphabetRadius].
inline constexpr std::int32_t kAlphabetRadius = 255;

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Corrupt or truncated payload. `position()` is the byte offset at which the
/// decoder noticed.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at byte " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Integer CDF over the contiguous symbol window [lo, lo + n - 1], optionally
/// followed by an escape bin. Escaped symbols are sent as raw offsets into the
/// full alphabet [alphabet_lo, alphabet_hi].
struct QuantizedCdf {
  std::int32_t lo = 0;
  std::vector<std::uint32_t> cdf;  // cdf[0] = 0, cdf.back() = kCdfTotal
  bool escape = false;
  std::int32_t alphabet_lo = -kAlphabetRadius;
  std::int32_t alphabet_hi = kAlphabetRadius;

  /// Number of in-window symbols.
  std::int32_t window_size() const {
    return static_cast<std::int32_t>(cdf.size()) - 1 - (escape ? 1 : 0);
  }
  std::int32_t hi() const { return lo + window_size() - 1; }
  /// Bits used per escaped symbol.
  int raw_bits() const;
  /// Code length of `v` in bits under this table.
  double cost_bits(std::int32_t v) const;
};

/// Frequencies summing to exactly kCdfTotal: every bin gets at least 1, the
/// rest is split proportionally and the rounding remainder goes to the most
/// probable bin.
std::vector<std::uint32_t> quantize_pmf(const std::vector<double>& pmf);

/// Table for arbitrary probabilities over [lo, lo + pmf.size() - 1]; when
/// `escape` is set the escape bin gets the leftover mass.
QuantizedCdf make_cdf(std::int32_t lo, const std::vector<double>& pmf, bool escape);

/// Discretized N(mu, sigma) over a window of round(mu) ± (ceil(8σ) + 1),
/// clipped to the alphabet, plus an escape bin for the tails.
QuantizedCdf gaussian_cdf(double mu, double sigma);

class RangeEncoder {
 public:
  /// Codes the interval [start, start + freq) of a 2^total_bits total.
  void encode(std::uint32_t start, std::uint32_t freq, int total_bits = kCdfPrecision);
  /// Up to 16 equiprobable bits.
  void encode_bits(std::uint32_t value, int bits);
  void encode_symbol(std::int32_t v, const QuantizedCdf& cdf);
  /// Flushes and returns the payload; the encoder is reset.
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  RangeDecoder(const std::uint8_t* data, std::size_t size);
  explicit RangeDecoder(const std::vector<std::uint8_t>& bytes)
      : RangeDecoder(bytes.data(), bytes.size()) {}

  std::uint32_t decode_bits(int bits);
  std::int32_t decode_symbol(const QuantizedCdf& cdf);
  std::size_t position() const { return pos_; }

 private:
  /// Value in [0, 2^total_bits) selecting the next interval.
  std::uint32_t peek(int total_bits);
  void consume(std::uint32_t start, std::uint32_t freq);
  std::uint8_t next_byte();

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t step_ = 0;
};

/// Per-position table source shared by encoder and decoder.
using CdfProvider = std::function<QuantizedCdf(std::size_t index)>;

std::vector<std::uint8_t> range_encode(const std::vector<std::int32_t>& symbols,
                                       const CdfProvider& cdfs);
std::vector<std::int32_t> range_decode(const std::vector<std::uint8_t>& bytes,
                                       const CdfProvider& cdfs, std::size_t count);

}  // namespace jdnd

#endif  // JDND_RANGE_CODER_HPP_
