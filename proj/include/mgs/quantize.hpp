#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mgs/common.hpp"

namespace mgs {

inline constexpr int kMaxBits = 16;  // searchable widths are 1..16, 0 = drop

/// Near-equal contiguous blocks over each channel's coefficient stream.
/// Blocks have ceil(len/B) elements, the last one ragged; streams shorter
/// than B get one element per block.
struct GroupPartition {
  // boundaries[c] has block_count(c)+1 offsets covering stream c exactly.
  std::vector<std::vector<size_t>> boundaries;

  static GroupPartition build(const std::vector<size_t>& stream_lengths, int blocks) {
    if (blocks < 1) throw std::invalid_argument("block count must be >= 1");
    GroupPartition p;
    p.boundaries.resize(stream_lengths.size());
    for (size_t c = 0; c < stream_lengths.size(); ++c) {
      size_t len = stream_lengths[c];
      auto& b = p.boundaries[c];
      b.push_back(0);
      if (len > 0) {
        size_t size = (len + size_t(blocks) - 1) / size_t(blocks);
        for (size_t off = size; off < len; off += size) b.push_back(off);
        b.push_back(len);
      }
    }
    return p;
  }

  size_t channel_count() const { return boundaries.size(); }
  size_t block_count(size_t c) const { return boundaries[c].size() - 1; }
  size_t block_begin(size_t c, size_t j) const { return boundaries[c][j]; }
  size_t block_end(size_t c, size_t j) const { return boundaries[c][j + 1]; }
  size_t block_length(size_t c, size_t j) const { return block_end(c, j) - block_begin(c, j); }
  size_t total_blocks() const {
    size_t n = 0;
    for (size_t c = 0; c < channel_count(); ++c) n += block_count(c);
    return n;
  }
};

/// One uniformly quantized group. min/max are stored as f32 and the decoder
/// recomputes the step from them, so the encoder quantizes against the
/// rounded values too.
struct QuantizedGroup {
  uint8_t bits = 0;
  float min = 0, max = 0;
  std::vector<uint16_t> codes;  // empty when bits == 0
};

namespace detail {

inline double quant_step(float min_f, float max_f, int bits) {
  return (double(max_f) - double(min_f)) / double(uint64_t(1) << bits);
}

// Z = floor(2^b - max/S). An integer zero point keeps interior rounding
// error at S/2; flooring (rather than rounding to nearest) keeps the
// clamp-at-max error within one step, so |dequant - x| <= S holds for every
// element of the group.
inline double quant_zero(float max_f, int bits, double step) {
  return std::floor(double(uint64_t(1) << bits) - double(max_f) / step);
}

}  // namespace detail

/// c_q = round(clamp(c/S + Z, 0, 2^b - 1)) with S = (max-min)/2^b and
/// Z = round(2^b - max/S). Round-half-to-even throughout. A degenerate
/// range (max == min as f32) stores no information and dequantizes to the
/// constant exactly.
inline QuantizedGroup quantize_group(std::span<const double> values, int bits) {
  if (values.empty()) throw std::invalid_argument("empty quantization group");
  if (bits < 0 || bits > kMaxBits) throw std::invalid_argument("bit-width out of [0,16]");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite value in quantization group");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  QuantizedGroup g;
  g.bits = uint8_t(bits);
  // Stored bounds round outward so every element lies inside [min, max] as
  // reconstructed from the f32 metadata.
  g.min = float(lo);
  if (double(g.min) > lo) g.min = std::nextafterf(g.min, -std::numeric_limits<float>::infinity());
  g.max = float(hi);
  if (double(g.max) < hi) g.max = std::nextafterf(g.max, std::numeric_limits<float>::infinity());
  if (bits == 0) return g;  // drop: metadata only
  if (g.min == g.max) {
    g.codes.assign(values.size(), 0);
    return g;
  }
  double step = detail::quant_step(g.min, g.max, bits);
  double zero = detail::quant_zero(g.max, bits, step);
  double top = double((uint64_t(1) << bits) - 1);
  g.codes.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    double level = std::clamp(values[i] / step + zero, 0.0, top);
    g.codes[i] = uint16_t(std::nearbyint(level));
  }
  return g;
}

inline size_t dequantized_size(const QuantizedGroup& g, size_t drop_size) {
  return g.bits == 0 ? drop_size : g.codes.size();
}

/// Inverse map: (code - Z)*S from the stored min/max/bits. Dropped groups
/// (bits == 0) restore the range midpoint everywhere.
inline std::vector<double> dequantize_group(const QuantizedGroup& g, size_t count) {
  std::vector<double> out(count);
  if (g.bits == 0) {
    double mid = 0.5 * (double(g.min) + double(g.max));
    for (auto& v : out) v = mid;
    return out;
  }
  if (g.codes.size() != count) throw std::invalid_argument("code count mismatch");
  if (g.min == g.max) {
    for (auto& v : out) v = double(g.min);
    return out;
  }
  double step = detail::quant_step(g.min, g.max, g.bits);
  double zero = detail::quant_zero(g.max, g.bits, step);
  for (size_t i = 0; i < count; ++i) out[i] = (double(g.codes[i]) - zero) * step;
  return out;
}

/// Bit-width per (channel, block). Entries beyond a channel's effective
/// block count are ignored.
struct BitWidthMatrix {
  size_t channels = 0, blocks = 0;
  std::vector<uint8_t> q;  // channels x blocks, row-major

  static BitWidthMatrix uniform(size_t channels, size_t blocks, int bits) {
    BitWidthMatrix m;
    m.channels = channels;
    m.blocks = blocks;
    m.q.assign(channels * blocks, uint8_t(bits));
    return m;
  }
  uint8_t& at(size_t c, size_t j) { return q[c * blocks + j]; }
  uint8_t at(size_t c, size_t j) const { return q[c * blocks + j]; }
};

/// Quantizes every group; parallel over groups, elementwise identical to the
/// sequential loop at any thread count.
inline std::vector<std::vector<QuantizedGroup>> quantize_all(
    const std::vector<std::vector<double>>& channels, const GroupPartition& partition,
    const BitWidthMatrix& q) {
  size_t n_ch = partition.channel_count();
  if (channels.size() != n_ch || q.channels != n_ch)
    throw std::invalid_argument("channel count mismatch");

  std::vector<std::vector<QuantizedGroup>> out(n_ch);
  struct Task {
    size_t c, j;
  };
  std::vector<Task> tasks;
  for (size_t c = 0; c < n_ch; ++c) {
    size_t nb = partition.block_count(c);
    if (nb > q.blocks) throw std::invalid_argument("partition exceeds bit-width matrix blocks");
    out[c].resize(nb);
    for (size_t j = 0; j < nb; ++j) tasks.push_back({c, j});
  }
  parallel_chunks(tasks.size(), 8, [&](size_t, size_t begin, size_t end) {
    for (size_t t = begin; t < end; ++t) {
      auto [c, j] = tasks[t];
      try {
        std::span<const double> block(channels[c].data() + partition.block_begin(c, j),
                                      partition.block_length(c, j));
        out[c][j] = quantize_group(block, q.at(c, j));
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("channel " + std::to_string(c) + " block " +
                                    std::to_string(j) + ": " + e.what());
      }
    }
  });
  return out;
}

enum class NormKind : uint8_t { L1 = 0, L2 = 1, Linf = 2 };

inline const char* norm_name(NormKind k) {
  switch (k) {
    case NormKind::L1: return "l1";
    case NormKind::L2: return "l2";
    case NormKind::Linf: return "linf";
  }
  return "?";
}

inline double residual_norm(std::span<const double> original, std::span<const double> restored,
                            NormKind kind) {
  double acc = 0;
  for (size_t i = 0; i < original.size(); ++i) {
    double r = std::abs(restored[i] - original[i]);
    switch (kind) {
      case NormKind::L1: acc += r; break;
      case NormKind::L2: acc += r * r; break;
      case NormKind::Linf: acc = std::max(acc, r); break;
    }
  }
  return kind == NormKind::L2 ? std::sqrt(acc) : acc;
}

/// Quantization loss per (channel, block, bit-width). Index 0 of the width
/// axis is the drop option (restore the range midpoint).
struct LossTable {
  size_t channels = 0, blocks = 0;
  NormKind norm = NormKind::L2;
  std::vector<double> omega;  // channels x blocks x (kMaxBits+1)

  double at(size_t c, size_t j, int bits) const {
    return omega[(c * blocks + j) * (kMaxBits + 1) + size_t(bits)];
  }
  double& at(size_t c, size_t j, int bits) {
    return omega[(c * blocks + j) * (kMaxBits + 1) + size_t(bits)];
  }
};

inline LossTable build_loss_table(const std::vector<std::vector<double>>& channels,
                                  const GroupPartition& partition, size_t max_blocks,
                                  NormKind norm) {
  LossTable table;
  table.channels = partition.channel_count();
  table.blocks = max_blocks;
  table.norm = norm;
  table.omega.assign(table.channels * table.blocks * (kMaxBits + 1), 0.0);

  struct Task {
    size_t c, j;
  };
  std::vector<Task> tasks;
  for (size_t c = 0; c < table.channels; ++c)
    for (size_t j = 0; j < partition.block_count(c); ++j) tasks.push_back({c, j});

  parallel_chunks(tasks.size(), 4, [&](size_t, size_t begin, size_t end) {
    for (size_t t = begin; t < end; ++t) {
      auto [c, j] = tasks[t];
      std::span<const double> block(channels[c].data() + partition.block_begin(c, j),
                                    partition.block_length(c, j));
      for (int b = 0; b <= kMaxBits; ++b) {
        QuantizedGroup g = quantize_group(block, b);
        std::vector<double> restored = dequantize_group(g, block.size());
        table.at(c, j, b) = residual_norm(block, restored, norm);
      }
    }
  });
  return table;
}

}  // namespace mgs
