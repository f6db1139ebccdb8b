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

#include "jdnd/range_coder.hpp"

#include <algorithm>
#include <cmath>

#include "jdnd/entropy.hpp"

namespace jdnd {
namespace {

constexpr std::uint32_t kTop = 1u << 24;

int bits_for(std::uint32_t n) {
  int b = 0;
  while ((1u << b) < n) ++b;
  return b;
}

}  // namespace

int QuantizedCdf::raw_bits() const {
  return bits_for(static_cast<std::uint32_t>(alphabet_hi - alphabet_lo + 1));
}

double QuantizedCdf::cost_bits(std::int32_t v) const {
  auto bin_bits = [&](std::size_t i) {
    return kCdfPrecision - std::log2(static_cast<double>(cdf[i + 1] - cdf[i]));
  };
  if (v >= lo && v <= hi()) return bin_bits(static_cast<std::size_t>(v - lo));
  return bin_bits(cdf.size() - 2) + raw_bits();
}

std::vector<std::uint32_t> quantize_pmf(const std::vector<double>& pmf) {
  const std::size_t n = pmf.size();
  if (n == 0 || n > kCdfTotal) throw EncodeError("pmf size out of range");
  double mass = 0.0;
  for (double p : pmf) mass += std::max(p, 0.0);
  if (!(mass > 0.0)) throw EncodeError("pmf has no mass");
  const double spread = static_cast<double>(kCdfTotal - n);
  std::vector<std::uint32_t> freq(n);
  std::uint64_t total = 0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::max(pmf[i], 0.0) / mass;
    freq[i] = 1 + static_cast<std::uint32_t>(std::floor(p * spread));
    total += freq[i];
    if (pmf[i] > pmf[best]) best = i;
  }
  freq[best] += static_cast<std::uint32_t>(kCdfTotal - total);
  return freq;
}

QuantizedCdf make_cdf(std::int32_t lo, const std::vector<double>& pmf, bool escape) {
  QuantizedCdf out;
  out.lo = lo;
  out.escape = escape;
  std::vector<double> p = pmf;
  if (escape) {
    double mass = 0.0;
    for (double v : pmf) mass += v;
    p.push_back(std::max(1.0 - mass, 0.0));
  }
  const auto freq = quantize_pmf(p);
  out.cdf.resize(freq.size() + 1);
  out.cdf[0] = 0;
  for (std::size_t i = 0; i < freq.size(); ++i) out.cdf[i + 1] = out.cdf[i] + freq[i];
  return out;
}

QuantizedCdf gaussian_cdf(double mu, double sigma) {
  sigma = std::max(sigma, kSigmaMin);
  const double center = std::clamp(std::round(mu), double(-kAlphabetRadius), double(kAlphabetRadius));
  const double radius = std::ceil(8.0 * sigma) + 1.0;
  const auto lo = static_cast<std::int32_t>(std::max(center - radius, double(-kAlphabetRadius)));
  const auto hi = static_cast<std::int32_t>(std::min(center + radius, double(kAlphabetRadius)));
  std::vector<double> pmf(static_cast<std::size_t>(hi - lo + 1));
  for (std::int32_t v = lo; v <= hi; ++v) pmf[static_cast<std::size_t>(v - lo)] = gaussian_pmf(v, mu, sigma);
  return make_cdf(lo, pmf, true);
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(std::uint32_t start, std::uint32_t freq, int total_bits) {
  if (freq == 0 || start + freq > (1u << total_bits)) throw EncodeError("invalid coding interval");
  const std::uint32_t r = range_ >> total_bits;
  low_ += static_cast<std::uint64_t>(r) * start;
  range_ = r * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_bits(std::uint32_t value, int bits) {
  if (bits <= 0) return;
  if (bits > 16 || value >> bits) throw EncodeError("raw value does not fit in " + std::to_string(bits) + " bits");
  encode(value, 1, bits);
}

void RangeEncoder::encode_symbol(std::int32_t v, const QuantizedCdf& cdf) {
  if (v < cdf.alphabet_lo || v > cdf.alphabet_hi) {
    throw EncodeError("symbol " + std::to_string(v) + " outside alphabet");
  }
  if (v >= cdf.lo && v <= cdf.hi()) {
    const auto i = static_cast<std::size_t>(v - cdf.lo);
    encode(cdf.cdf[i], cdf.cdf[i + 1] - cdf.cdf[i]);
    return;
  }
  if (!cdf.escape) throw EncodeError("symbol " + std::to_string(v) + " outside table without escape");
  const std::size_t e = cdf.cdf.size() - 2;
  encode(cdf.cdf[e], cdf.cdf[e + 1] - cdf.cdf[e]);
  encode_bits(static_cast<std::uint32_t>(v - cdf.alphabet_lo), cdf.raw_bits());
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  std::vector<std::uint8_t> out = std::move(out_);
  *this = RangeEncoder();
  return out;
}

RangeDecoder::RangeDecoder(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {
  if (next_byte() != 0) throw DecodeError("bad range coder preamble", 0);
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
  if (code_ == 0xFFFFFFFFu) throw DecodeError("corrupt range coder state", pos_);
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= size_) throw DecodeError("truncated payload", pos_);
  return data_[pos_++];
}

std::uint32_t RangeDecoder::peek(int total_bits) {
  step_ = range_ >> total_bits;
  const std::uint32_t v = code_ / step_;
  if (v >= (1u << total_bits)) throw DecodeError("corrupt payload", pos_);
  return v;
}

void RangeDecoder::consume(std::uint32_t start, std::uint32_t freq) {
  code_ -= step_ * start;
  range_ = step_ * freq;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  if (code_ >= range_) throw DecodeError("corrupt payload", pos_);
}

std::uint32_t RangeDecoder::decode_bits(int bits) {
  if (bits <= 0) return 0;
  const std::uint32_t v = peek(bits);
  consume(v, 1);
  return v;
}

std::int32_t RangeDecoder::decode_symbol(const QuantizedCdf& cdf) {
  const std::uint32_t v = peek(kCdfPrecision);
  const auto it = std::upper_bound(cdf.cdf.begin(), cdf.cdf.end(), v);
  const auto i = static_cast<std::size_t>(it - cdf.cdf.begin()) - 1;
  consume(cdf.cdf[i], cdf.cdf[i + 1] - cdf.cdf[i]);
  if (cdf.escape && i == cdf.cdf.size() - 2) {
    const std::uint32_t raw = decode_bits(cdf.raw_bits());
    const std::int32_t s = cdf.alphabet_lo + static_cast<std::int32_t>(raw);
    if (s > cdf.alphabet_hi) throw DecodeError("escaped symbol outside alphabet", pos_);
    return s;
  }
  return cdf.lo + static_cast<std::int32_t>(i);
}

std::vector<std::uint8_t> range_encode(const std::vector<std::int32_t>& symbols,
                                       const CdfProvider& cdfs) {
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode_symbol(symbols[i], cdfs(i));
  return enc.finish();
}

std::vector<std::int32_t> range_decode(const std::vector<std::uint8_t>& bytes,
                                       const CdfProvider& cdfs, std::size_t count) {
  RangeDecoder dec(bytes);
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = dec.decode_symbol(cdfs(i));
  return out;
}

}  // namespace jdnd
