#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgs/common.hpp"

namespace mgs {

inline constexpr uint32_t kFreqTotal = 1u << 16;

/// Static cumulative-frequency model with a fixed 16-bit total. Counts are
/// apportioned by largest remainder and every symbol keeps width >= 1, so a
/// stream symbol never has zero probability. Alphabets larger than 2^16 must
/// be split into byte planes by the caller.
struct FrequencyTable {
  uint32_t symbol_count = 0;
  std::vector<uint32_t> cum_freq;  // symbol_count + 1 entries, cum_freq[S] == kFreqTotal

  uint32_t width(uint32_t s) const { return cum_freq[s + 1] - cum_freq[s]; }

  /// Cross-entropy of `symbols` under this table, in bits.
  double cross_entropy_bits(std::span<const uint32_t> symbols) const {
    double bits = 0;
    for (uint32_t s : symbols) bits += -std::log2(double(width(s)) / double(kFreqTotal));
    return bits;
  }
};

inline FrequencyTable build_table(std::span<const uint32_t> symbols, uint32_t symbol_count = 0) {
  if (symbols.empty() && symbol_count == 0)
    throw std::invalid_argument("cannot build a frequency table from nothing");
  uint32_t max_sym = 0;
  for (uint32_t s : symbols) max_sym = std::max(max_sym, s);
  uint32_t s_count = symbol_count == 0 ? max_sym + 1 : symbol_count;
  if (!symbols.empty() && max_sym >= s_count)
    throw std::invalid_argument("symbol " + std::to_string(max_sym) + " >= alphabet size " +
                                std::to_string(s_count));
  if (s_count > kFreqTotal)
    throw std::invalid_argument("alphabet exceeds the 16-bit frequency total");

  std::vector<uint64_t> counts(s_count, 0);
  for (uint32_t s : symbols) ++counts[s];
  uint64_t n = symbols.size();

  std::vector<uint32_t> widths(s_count, 0);
  if (n == 0) {
    // No observations: uniform.
    uint32_t base = kFreqTotal / s_count, extra = kFreqTotal % s_count;
    for (uint32_t s = 0; s < s_count; ++s) widths[s] = base + (s < extra ? 1 : 0);
  } else {
    // Largest-remainder apportionment of the counts.
    std::vector<std::pair<double, uint32_t>> remainders(s_count);
    uint64_t assigned = 0;
    for (uint32_t s = 0; s < s_count; ++s) {
      double ideal = double(counts[s]) * double(kFreqTotal) / double(n);
      widths[s] = uint32_t(std::floor(ideal));
      assigned += widths[s];
      remainders[s] = {ideal - std::floor(ideal), s};
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (size_t i = 0; assigned < kFreqTotal; ++i, ++assigned) widths[remainders[i].second] += 1;

    // Guarantee width >= 1 everywhere, taking from the widest entries.
    size_t zero_count = 0;
    for (uint32_t w : widths) zero_count += (w == 0);
    if (zero_count > 0) {
      std::vector<uint32_t> order(s_count);
      for (uint32_t s = 0; s < s_count; ++s) order[s] = s;
      std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (widths[a] != widths[b]) return widths[a] > widths[b];
        return a < b;
      });
      size_t donor = 0;
      for (uint32_t s = 0; s < s_count; ++s) {
        if (widths[s] != 0) continue;
        while (widths[order[donor]] <= 1) ++donor;
        widths[order[donor]] -= 1;
        widths[s] = 1;
      }
    }
  }

  FrequencyTable table;
  table.symbol_count = s_count;
  table.cum_freq.resize(s_count + 1);
  table.cum_freq[0] = 0;
  for (uint32_t s = 0; s < s_count; ++s) table.cum_freq[s + 1] = table.cum_freq[s] + widths[s];
  return table;
}

// ---------------------------------------------------------------------------
// 32-bit renormalizing range coder with carry propagation and a final
// 5-byte flush (one spurious leading byte plus 4 tail bytes).
// ---------------------------------------------------------------------------

class RangeEncoder {
 public:
  void encode(uint32_t cum_low, uint32_t cum_high, uint32_t total) {
    uint32_t r = range_ / total;
    low_ += uint64_t(r) * cum_low;
    if (cum_high == total)
      range_ -= r * cum_low;  // give the top symbol the rounding remainder
    else
      range_ = r * (cum_high - cum_low);
    while (range_ < (1u << 24)) {
      range_ <<= 8;
      shift_low();
    }
  }

  void encode_symbol(const FrequencyTable& t, uint32_t s) {
    if (s >= t.symbol_count) throw std::invalid_argument("symbol out of table range");
    encode(t.cum_freq[s], t.cum_freq[s + 1], kFreqTotal);
  }

  std::vector<uint8_t> finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    return std::move(out_);
  }

 private:
  void shift_low() {
    if (uint32_t(low_) < 0xFF000000u || (low_ >> 32) != 0) {
      uint8_t carry = uint8_t(low_ >> 32);
      uint8_t b = cache_;
      do {
        out_.push_back(uint8_t(b + carry));
        b = 0xFF;
      } while (--cache_size_ != 0);
      cache_ = uint8_t(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFull) << 8;
  }

  std::vector<uint8_t> out_;
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
    next_byte();  // spurious leading byte from the encoder's first shift
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
  }

  uint32_t decode_symbol(const FrequencyTable& t) {
    uint32_t r = range_ / kFreqTotal;
    uint32_t f = std::min(uint32_t(code_ / r), kFreqTotal - 1);
    // Smallest s with cum_freq[s+1] > f.
    auto it = std::upper_bound(t.cum_freq.begin(), t.cum_freq.end(), f);
    uint32_t s = uint32_t(it - t.cum_freq.begin()) - 1;
    uint32_t lo = t.cum_freq[s], hi = t.cum_freq[s + 1];
    code_ -= r * lo;
    if (hi == kFreqTotal)
      range_ -= r * lo;
    else
      range_ = r * (hi - lo);
    while (range_ < (1u << 24)) {
      code_ = (code_ << 8) | next_byte();
      range_ <<= 8;
    }
    return s;
  }

  /// All payload bytes must have been consumed (the flush tail may remain).
  void verify_consumed() const {
    if (pos_ + 5 < size_ + 1)  // pos_ >= size_ - 4
      throw ContainerError("entropy stream has unread payload (corrupt stream?)");
  }

 private:
  uint8_t next_byte() {
    // A well-formed stream is self-sufficient: the 5-byte flush covers every
    // renormalization read, so running out of bytes means truncation.
    if (pos_ >= size_) throw ContainerError("entropy stream truncated");
    return data_[pos_++];
  }

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
};

/// Encodes a symbol stream against a static table. Alphabets of size 1
/// carry no information and produce an empty payload.
inline std::vector<uint8_t> entropy_encode(std::span<const uint32_t> symbols,
                                           const FrequencyTable& table) {
  if (symbols.empty() || table.symbol_count <= 1) {
    for (uint32_t s : symbols)
      if (s >= table.symbol_count) throw std::invalid_argument("symbol out of table range");
    return {};
  }
  RangeEncoder enc;
  for (uint32_t s : symbols) enc.encode_symbol(table, s);
  return enc.finish();
}

inline std::vector<uint32_t> entropy_decode(std::span<const uint8_t> payload,
                                            const FrequencyTable& table, size_t count) {
  if (count == 0) {
    if (!payload.empty()) throw ContainerError("unexpected payload for empty stream");
    return {};
  }
  if (table.symbol_count <= 1) {
    if (!payload.empty()) throw ContainerError("unexpected payload for degenerate alphabet");
    return std::vector<uint32_t>(count, 0);
  }
  RangeDecoder dec(payload.data(), payload.size());
  std::vector<uint32_t> out(count);
  for (size_t i = 0; i < count; ++i) out[i] = dec.decode_symbol(table);
  dec.verify_consumed();
  return out;
}

/// Empirical Shannon bound per the reserve-ratio scaling: reserve_count times
/// the stream's entropy in bits/symbol. Diagnostic only.
inline double entropy_lower_bound(std::span<const uint32_t> symbols, size_t reserve_count) {
  if (symbols.empty()) throw std::invalid_argument("empty symbol stream");
  uint32_t max_sym = 0;
  for (uint32_t s : symbols) max_sym = std::max(max_sym, s);
  std::vector<uint64_t> counts(size_t(max_sym) + 1, 0);
  for (uint32_t s : symbols) ++counts[s];
  double h = 0;
  double n = double(symbols.size());
  for (uint64_t c : counts) {
    if (c == 0) continue;
    double p = double(c) / n;
    h -= p * std::log2(p);
  }
  return double(reserve_count) * h;
}

// ---------------------------------------------------------------------------
// LZ stage (zlib) for the metadata section. Bit-exactly invertible.
// ---------------------------------------------------------------------------

inline std::vector<uint8_t> lz_compress(std::span<const uint8_t> data) {
  uLongf bound = compressBound(uLong(data.size()));
  std::vector<uint8_t> out(size_t(bound) + 8);
  uint64_t raw_size = data.size();
  std::memcpy(out.data(), &raw_size, 8);
  uLongf dest_len = bound;
  int rc = compress2(out.data() + 8, &dest_len, data.data(), uLong(data.size()), 9);
  if (rc != Z_OK) throw std::runtime_error("zlib compress failed: " + std::to_string(rc));
  out.resize(size_t(dest_len) + 8);
  return out;
}

inline std::vector<uint8_t> lz_decompress(std::span<const uint8_t> data) {
  if (data.size() < 8) throw ContainerError("LZ blob too short");
  uint64_t raw_size;
  std::memcpy(&raw_size, data.data(), 8);
  if (raw_size > (1ull << 34)) throw ContainerError("LZ blob declares implausible size");
  std::vector<uint8_t> out(raw_size);
  uLongf dest_len = uLongf(raw_size);
  int rc = uncompress(out.data(), &dest_len, data.data() + 8, uLong(data.size() - 8));
  if (rc != Z_OK || dest_len != raw_size) throw ContainerError("LZ blob is corrupt");
  return out;
}

}  // namespace mgs
