#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mgs/common.hpp"
#include "mgs/container.hpp"
#include "mgs/entropy.hpp"
#include "mgs/geometry.hpp"
#include "mgs/gs_model.hpp"
#include "mgs/quantize.hpp"
#include "mgs/sh_vq.hpp"
#include "mgs/splat.hpp"
#include "mgs/transform.hpp"

namespace mgs {

struct EncodeConfig {
  int depth = 12;             // octree depth, 1..21
  int blocks = 40;            // quantization blocks per channel
  NormKind norm = NormKind::L2;
  double beta = 0.1;          // view-independent importance exponent
  size_t codebook = 4096;     // k for the SH codebook (clamped to the row count)
  int kmeans_iters = 10;
  size_t kmeans_batch = size_t(1) << 16;
  uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Frequency-table and octree-context serialization (metadata section).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_table(ByteWriter& w, const FrequencyTable& t) {
  w.u32(t.symbol_count);
  for (uint32_t s = 0; s < t.symbol_count; ++s) w.u32(t.width(s));
}

inline FrequencyTable read_table(ByteReader& r) {
  FrequencyTable t;
  t.symbol_count = r.u32();
  if (t.symbol_count == 0 || t.symbol_count > kFreqTotal)
    throw ContainerError("frequency table has invalid alphabet size");
  t.cum_freq.resize(t.symbol_count + 1);
  t.cum_freq[0] = 0;
  for (uint32_t s = 0; s < t.symbol_count; ++s) {
    uint32_t width = r.u32();
    if (width == 0 || width > kFreqTotal) throw ContainerError("frequency table width invalid");
    t.cum_freq[s + 1] = t.cum_freq[s] + width;
  }
  if (t.cum_freq.back() != kFreqTotal)
    throw ContainerError("frequency table widths do not sum to 2^16");
  return t;
}

/// Context of each occupancy byte: the parent's occupancy byte, 0 for the
/// root. Contexts derive from already-decoded bytes, so the decoder can
/// reproduce them on the fly.
inline std::vector<uint8_t> octree_contexts(const std::vector<uint8_t>& occupancy, int depth) {
  std::vector<uint8_t> ctx(occupancy.size());
  std::vector<uint8_t> frontier = {0};  // contexts of the current level's nodes
  size_t pos = 0;
  for (int level = 0; level < depth && pos < occupancy.size(); ++level) {
    std::vector<uint8_t> next;
    for (uint8_t c : frontier) {
      if (pos >= occupancy.size()) throw ContainerError("octree context derivation overflow");
      uint8_t byte = occupancy[pos];
      ctx[pos] = c;
      ++pos;
      if (level + 1 < depth) {
        int children = __builtin_popcount(byte);
        for (int i = 0; i < children; ++i) next.push_back(byte);
      }
    }
    frontier = std::move(next);
  }
  if (pos != occupancy.size()) throw ContainerError("octree stream length mismatch");
  return ctx;
}

/// Static per-parent-context occupancy model; contexts seen fewer than 16
/// times fall back to a shared order-0 table.
struct OctreeModel {
  static constexpr size_t kMinContextCount = 16;
  std::vector<int16_t> table_of_ctx = std::vector<int16_t>(256, -1);  // -1 = fallback
  std::vector<FrequencyTable> dedicated;
  FrequencyTable fallback;

  const FrequencyTable& table_for(uint8_t ctx) const {
    int16_t id = table_of_ctx[ctx];
    return id < 0 ? fallback : dedicated[size_t(id)];
  }
};

inline OctreeModel build_octree_model(const std::vector<uint8_t>& occupancy,
                                      const std::vector<uint8_t>& contexts) {
  OctreeModel model;
  std::vector<size_t> counts(256, 0);
  for (uint8_t c : contexts) ++counts[c];

  std::vector<std::vector<uint32_t>> bucket_symbols(256);
  std::vector<uint32_t> fallback_symbols;
  for (size_t i = 0; i < occupancy.size(); ++i) {
    uint8_t c = contexts[i];
    if (counts[c] >= OctreeModel::kMinContextCount)
      bucket_symbols[c].push_back(occupancy[i]);
    else
      fallback_symbols.push_back(occupancy[i]);
  }
  for (int c = 0; c < 256; ++c) {
    if (counts[c] >= OctreeModel::kMinContextCount) {
      model.table_of_ctx[c] = int16_t(model.dedicated.size());
      model.dedicated.push_back(build_table(bucket_symbols[c], 256));
    }
  }
  model.fallback = build_table(fallback_symbols, 256);
  return model;
}

inline void write_octree_model(ByteWriter& w, const OctreeModel& m) {
  uint16_t n = 0;
  for (int c = 0; c < 256; ++c) n += (m.table_of_ctx[c] >= 0);
  w.u16(n);
  for (int c = 0; c < 256; ++c) {
    if (m.table_of_ctx[c] < 0) continue;
    w.u8(uint8_t(c));
    write_table(w, m.dedicated[size_t(m.table_of_ctx[c])]);
  }
  write_table(w, m.fallback);
}

inline OctreeModel read_octree_model(ByteReader& r) {
  OctreeModel m;
  uint16_t n = r.u16();
  for (uint16_t i = 0; i < n; ++i) {
    uint8_t ctx = r.u8();
    if (m.table_of_ctx[ctx] >= 0) throw ContainerError("duplicate octree context table");
    m.table_of_ctx[ctx] = int16_t(m.dedicated.size());
    m.dedicated.push_back(read_table(r));
  }
  m.fallback = read_table(r);
  return m;
}

inline std::vector<uint8_t> encode_occupancy(const std::vector<uint8_t>& occupancy,
                                             const std::vector<uint8_t>& contexts,
                                             const OctreeModel& model) {
  if (occupancy.empty()) return {};
  RangeEncoder enc;
  for (size_t i = 0; i < occupancy.size(); ++i)
    enc.encode_symbol(model.table_for(contexts[i]), occupancy[i]);
  return enc.finish();
}

/// Decodes `count` occupancy bytes, deriving each byte's context from the
/// bytes already decoded.
inline std::vector<uint8_t> decode_occupancy(std::span<const uint8_t> payload,
                                             const OctreeModel& model, size_t count, int depth) {
  std::vector<uint8_t> out;
  if (count == 0) return out;
  out.reserve(count);
  RangeDecoder dec(payload.data(), payload.size());
  std::vector<uint8_t> frontier = {0};
  for (int level = 0; level < depth && out.size() < count; ++level) {
    std::vector<uint8_t> next;
    for (uint8_t ctx : frontier) {
      if (out.size() >= count) throw ContainerError("octree occupancy count mismatch");
      uint8_t byte = uint8_t(dec.decode_symbol(model.table_for(ctx)));
      if (byte == 0) throw ContainerError("zero occupancy byte in octree stream");
      out.push_back(byte);
      if (level + 1 < depth) {
        int children = __builtin_popcount(byte);
        for (int i = 0; i < children; ++i) next.push_back(byte);
      }
    }
    frontier = std::move(next);
  }
  if (out.size() != count) throw ContainerError("octree occupancy count mismatch");
  dec.verify_consumed();
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Prepared model: everything that depends on (cloud, tau) but not on the
// bit-width setting, cached so the calibration loop only redoes the
// quantization and entropy stages.
// ---------------------------------------------------------------------------

struct PreparedModel {
  EncodeConfig cfg;
  int sh_degree = 0;
  GaussianCloud dedup;  // Morton order
  VoxelGrid grid;
  OctreeStream octree;
  std::shared_ptr<RahtPlan> raht;
  std::vector<double> importance;              // per dedup gaussian (group max)
  ShCodebook base_codebook;                    // r = 0
  std::vector<std::vector<double>> raw_values; // 10 channels x M
  std::vector<RahtChannel> transformed;        // 10 channels (dc + ac)

  // Cached section bytes that do not change with Q.
  std::vector<uint8_t> octree_section;
  detail::OctreeModel octree_model;

  size_t gaussian_count() const { return dedup.count; }

  /// Stream lengths for a given plan (AC count for transformed channels, M
  /// for raw ones).
  std::vector<size_t> stream_lengths(const TransformPlan& plan) const {
    std::vector<size_t> len(kChannelCount);
    size_t m = dedup.count;
    for (int c = 0; c < kChannelCount; ++c) len[c] = plan.raht[c] ? m - 1 : m;
    return len;
  }

  /// Channel streams under a plan (copies; the sources are cached).
  std::vector<std::vector<double>> streams(const TransformPlan& plan) const {
    std::vector<std::vector<double>> out(kChannelCount);
    for (int c = 0; c < kChannelCount; ++c)
      out[c] = plan.raht[c] ? transformed[c].ac : raw_values[c];
    return out;
  }

  std::vector<float> dc_floats(const TransformPlan& plan) const {
    std::vector<float> dc;
    for (int c = 0; c < kChannelCount; ++c)
      if (plan.raht[c]) dc.push_back(float(transformed[c].dc));
    return dc;
  }
};

/// Runs the Q-independent pipeline stages: prune by joint importance,
/// voxelize, deduplicate, build the octree and RAHT plan, transform all
/// channels, cluster the high-degree SH coefficients.
inline PreparedModel prepare_model(const GaussianCloud& cloud,
                                   const std::vector<double>& joint_importance, double tau,
                                   const EncodeConfig& cfg) {
  PreparedModel pm;
  pm.cfg = cfg;
  pm.sh_degree = cloud.sh_degree;

  PruneResult pruned = prune(cloud, joint_importance, tau);
  if (pruned.cloud.count == 0) throw std::invalid_argument("pruning removed every gaussian");

  Aabb box = compute_aabb(pruned.cloud.positions);
  VoxelizeResult vox = voxelize(pruned.cloud.positions, cfg.depth, box);
  pm.grid = vox.grid;
  pm.dedup = dedup_average(pruned.cloud, vox.grid, vox.assignment);
  pm.octree = encode_octree(vox.grid);
  pm.raht = std::make_shared<RahtPlan>(vox.grid.keys, cfg.depth);

  // Importance carried through dedup as the group max.
  pm.importance.assign(pm.dedup.count, 0.0);
  for (size_t i = 0; i < pruned.cloud.count; ++i) {
    double s = joint_importance[pruned.kept[i]];
    pm.importance[vox.assignment[i]] = std::max(pm.importance[vox.assignment[i]], s);
  }

  pm.raw_values = channel_values(pm.dedup);
  pm.transformed.resize(kChannelCount);
  for (int c = 0; c < kChannelCount; ++c)
    pm.transformed[c] = raht_forward(pm.raw_values[c], *pm.raht);

  size_t dim = size_t(pm.dedup.rest_dim());
  pm.base_codebook =
      encode_sh(pm.dedup.sh_rest, pm.dedup.count, dim, pm.importance,
                std::min(cfg.codebook, pm.dedup.count), cfg.kmeans_iters, cfg.kmeans_batch,
                cfg.seed, /*r=*/0);

  // Octree section (independent of Q): header + context-coded occupancy.
  auto contexts = detail::octree_contexts(pm.octree.occupancy, pm.octree.depth);
  pm.octree_model = detail::build_octree_model(pm.octree.occupancy, contexts);
  auto coded = detail::encode_occupancy(pm.octree.occupancy, contexts, pm.octree_model);
  ByteWriter w;
  w.u8(1);  // geometry coder id: internal breadth-first occupancy coder
  w.u8(uint8_t(pm.octree.depth));
  w.f32(float(pm.octree.aabb.min.x));
  w.f32(float(pm.octree.aabb.min.y));
  w.f32(float(pm.octree.aabb.min.z));
  w.f32(float(pm.octree.aabb.max.x));
  w.f32(float(pm.octree.aabb.max.y));
  w.f32(float(pm.octree.aabb.max.z));
  w.u32(pm.octree.leaf_count);
  w.u32(uint32_t(pm.octree.occupancy.size()));
  w.u32(uint32_t(coded.size()));
  w.bytes(coded);
  pm.octree_section = w.take();
  return pm;
}

struct BuildResult {
  std::vector<uint8_t> bytes;
  double payload_bytes = 0;   // entropy-coded AC/code payload only
  double total_bytes = 0;
  std::array<size_t, kSectionCount> section_sizes{};
};

/// Assembles a container for a prepared model under a bit-width matrix, a
/// transform plan, and a retention count.
inline BuildResult build_container(const PreparedModel& pm, const BitWidthMatrix& q,
                                   const TransformPlan& plan, uint32_t retention, double tau) {
  size_t m = pm.dedup.count;
  auto lengths = pm.stream_lengths(plan);
  GroupPartition partition = GroupPartition::build(lengths, pm.cfg.blocks);
  auto streams = pm.streams(plan);
  auto groups = quantize_all(streams, partition, q);

  SectionBytes sections;
  sections[size_t(Section::Octree) - 1] = pm.octree_section;

  {
    ByteWriter w;
    w.u16(plan.to_mask());
    sections[size_t(Section::TransformFlags) - 1] = w.take();
  }
  {
    ByteWriter w;
    auto dc = pm.dc_floats(plan);
    w.u8(uint8_t(dc.size()));
    for (float v : dc) w.f32(v);
    sections[size_t(Section::DcCoefficients) - 1] = w.take();
  }

  // Per-channel frequency tables over all non-degenerate codes.
  std::vector<FrequencyTable> channel_tables(kChannelCount);
  double payload_bytes = 0;
  {
    ByteWriter w;
    w.u16(uint16_t(kChannelCount));
    uint32_t record_count = 0;
    for (int c = 0; c < kChannelCount; ++c) record_count += uint32_t(partition.block_count(c));
    w.u32(record_count);

    for (int c = 0; c < kChannelCount; ++c) {
      std::vector<uint32_t> symbols;
      for (size_t j = 0; j < partition.block_count(c); ++j) {
        const QuantizedGroup& g = groups[c][j];
        if (g.bits == 0 || g.min == g.max) continue;
        for (uint16_t code : g.codes) symbols.push_back(code);
      }
      channel_tables[c] = symbols.empty() ? build_table(symbols, 1) : build_table(symbols);

      for (size_t j = 0; j < partition.block_count(c); ++j) {
        const QuantizedGroup& g = groups[c][j];
        w.u8(g.bits);
        w.f32(g.min);
        w.f32(g.max);
        if (g.bits == 0 || g.min == g.max) {
          w.u32(0);
          continue;
        }
        std::vector<uint32_t> codes(g.codes.begin(), g.codes.end());
        auto coded = entropy_encode(codes, channel_tables[c]);
        w.u32(uint32_t(coded.size()));
        w.bytes(coded);
        payload_bytes += double(coded.size());
      }
    }
    sections[size_t(Section::GroupRecords) - 1] = w.take();
  }

  // SH codebook section. The assignment stream splits into high/low byte
  // planes so the alphabet never exceeds the 16-bit CDF total.
  FrequencyTable assign_hi_table, assign_lo_table;
  {
    ShCodebook cb = pm.base_codebook;
    if (retention > 0) {
      size_t dim = size_t(pm.dedup.rest_dim());
      cb.r = std::min<uint32_t>(retention, uint32_t(m));
      auto keep = retention_indices(pm.importance, cb.r);
      cb.entries.resize(size_t(cb.k + cb.r) * dim);
      for (uint32_t slot = 0; slot < cb.r; ++slot) {
        uint32_t row = keep[slot];
        std::copy(&pm.dedup.sh_rest[size_t(row) * dim],
                  &pm.dedup.sh_rest[size_t(row) * dim] + dim,
                  &cb.entries[size_t(cb.k + slot) * dim]);
        cb.assignments[row] = cb.k + slot;
      }
    }

    ByteWriter w;
    w.u32(cb.k);
    w.u32(cb.r);
    w.u16(uint16_t(cb.dim));
    w.u32(uint32_t(m));
    for (float v : cb.entries) w.f32(v);

    std::vector<uint32_t> hi(m), lo(m);
    for (size_t i = 0; i < m; ++i) {
      hi[i] = cb.assignments.empty() ? 0 : (cb.assignments[i] >> 8);
      lo[i] = cb.assignments.empty() ? 0 : (cb.assignments[i] & 0xFF);
    }
    if (cb.dim == 0) {
      assign_hi_table = build_table({}, 1);
      assign_lo_table = build_table({}, 1);
      w.u32(0);
      w.u32(0);
    } else {
      assign_hi_table = build_table(hi);
      assign_lo_table = build_table(lo);
      auto hi_bytes = entropy_encode(hi, assign_hi_table);
      auto lo_bytes = entropy_encode(lo, assign_lo_table);
      w.u32(uint32_t(hi_bytes.size()));
      w.bytes(hi_bytes);
      w.u32(uint32_t(lo_bytes.size()));
      w.bytes(lo_bytes);
      payload_bytes += double(hi_bytes.size() + lo_bytes.size());
    }
    sections[size_t(Section::ShCodebook) - 1] = w.take();
  }

  {
    ByteWriter w;
    w.u8(uint8_t(pm.sh_degree));
    w.u8(uint8_t(pm.cfg.norm));
    w.u8(uint8_t(pm.cfg.depth));
    w.u16(uint16_t(pm.cfg.blocks));
    w.u16(uint16_t(kChannelCount));
    w.f64(tau);
    w.u16(uint16_t(q.blocks));
    for (size_t c = 0; c < q.channels; ++c)
      for (size_t j = 0; j < q.blocks; ++j) w.u8(q.at(c, j));
    detail::write_octree_model(w, pm.octree_model);
    for (int c = 0; c < kChannelCount; ++c) detail::write_table(w, channel_tables[c]);
    detail::write_table(w, assign_hi_table);
    detail::write_table(w, assign_lo_table);
    sections[size_t(Section::Metadata) - 1] = lz_compress(w.data());
  }

  BuildResult out;
  out.bytes = pack_container(sections);
  out.payload_bytes = payload_bytes;
  out.total_bytes = double(out.bytes.size());
  for (size_t i = 0; i < kSectionCount; ++i) out.section_sizes[i] = sections[i].size();
  return out;
}

// ---------------------------------------------------------------------------
// Decoding.
// ---------------------------------------------------------------------------

struct DecodedModel {
  GaussianCloud cloud;
  TransformPlan plan;
  BitWidthMatrix q;
  double tau = 1.0;
  int depth = 0;
  int blocks = 0;
  NormKind norm = NormKind::L2;
  uint32_t sh_k = 0, sh_r = 0;
  // Dequantized per-channel streams (AC or raw), for reconstruction stats.
  std::vector<std::vector<double>> channel_streams;
};

inline DecodedModel decode_container(const std::vector<uint8_t>& bytes) {
  SectionBytes sections = unpack_container(bytes);
  DecodedModel out;

  // Metadata first: parameters and every frequency table.
  detail::OctreeModel octree_model;
  std::vector<FrequencyTable> channel_tables(kChannelCount);
  FrequencyTable assign_hi_table, assign_lo_table;
  int sh_degree = 0;
  {
    auto raw = lz_decompress(sections[size_t(Section::Metadata) - 1]);
    ByteReader r(raw);
    sh_degree = r.u8();
    if (sh_degree > 3) throw ContainerError("invalid SH degree in metadata");
    uint8_t norm = r.u8();
    if (norm > 2) throw ContainerError("invalid norm kind in metadata");
    out.norm = NormKind(norm);
    out.depth = r.u8();
    out.blocks = r.u16();
    uint16_t channels = r.u16();
    if (channels != kChannelCount) throw ContainerError("unexpected channel count in metadata");
    out.tau = r.f64();
    uint16_t q_blocks = r.u16();
    out.q.channels = channels;
    out.q.blocks = q_blocks;
    out.q.q.resize(size_t(channels) * q_blocks);
    for (auto& v : out.q.q) v = r.u8();
    octree_model = detail::read_octree_model(r);
    for (int c = 0; c < kChannelCount; ++c) channel_tables[c] = detail::read_table(r);
    assign_hi_table = detail::read_table(r);
    assign_lo_table = detail::read_table(r);
    if (!r.done()) throw ContainerError("trailing metadata bytes");
  }

  // Octree section.
  VoxelGrid grid;
  {
    ByteReader r(sections[size_t(Section::Octree) - 1]);
    uint8_t coder = r.u8();
    if (coder != 1) throw ContainerError("unknown geometry coder id");
    OctreeStream stream;
    stream.depth = r.u8();
    stream.aabb.min = {r.f32(), r.f32(), r.f32()};
    stream.aabb.max = {r.f32(), r.f32(), r.f32()};
    stream.leaf_count = r.u32();
    uint32_t raw_len = r.u32();
    uint32_t coded_len = r.u32();
    auto coded = r.bytes(coded_len);
    if (!r.done()) throw ContainerError("trailing octree bytes");
    stream.occupancy = detail::decode_occupancy(coded, octree_model, raw_len, stream.depth);
    grid = decode_octree(stream);
  }
  size_t m = grid.keys.size();

  {
    ByteReader r(sections[size_t(Section::TransformFlags) - 1]);
    out.plan = TransformPlan::from_mask(r.u16());
    if (!r.done()) throw ContainerError("trailing flag bytes");
  }

  std::vector<float> dc;
  {
    ByteReader r(sections[size_t(Section::DcCoefficients) - 1]);
    uint8_t count = r.u8();
    for (int i = 0; i < count; ++i) dc.push_back(r.f32());
    if (!r.done()) throw ContainerError("trailing DC bytes");
    size_t expected = 0;
    for (int c = 0; c < kChannelCount; ++c) expected += out.plan.raht[c];
    if (dc.size() != expected) throw ContainerError("DC count does not match transform flags");
  }

  // Group records -> dequantized channel streams.
  RahtPlan raht(grid.keys, grid.depth);
  std::vector<size_t> lengths(kChannelCount);
  for (int c = 0; c < kChannelCount; ++c) lengths[c] = out.plan.raht[c] ? m - 1 : m;
  GroupPartition partition = GroupPartition::build(lengths, out.blocks);
  out.channel_streams.assign(kChannelCount, {});
  {
    ByteReader r(sections[size_t(Section::GroupRecords) - 1]);
    if (r.u16() != kChannelCount) throw ContainerError("group record channel count mismatch");
    uint32_t record_count = r.u32();
    if (record_count != partition.total_blocks())
      throw ContainerError("group record count mismatch");
    for (int c = 0; c < kChannelCount; ++c) {
      out.channel_streams[c].reserve(lengths[c]);
      for (size_t j = 0; j < partition.block_count(c); ++j) {
        QuantizedGroup g;
        g.bits = r.u8();
        if (g.bits > kMaxBits) throw ContainerError("group bit-width out of range");
        g.min = r.f32();
        g.max = r.f32();
        uint32_t len = r.u32();
        size_t n = partition.block_length(c, j);
        if (g.bits != 0 && g.min != g.max) {
          auto payload = r.bytes(len);
          auto codes = entropy_decode(payload, channel_tables[c], n);
          g.codes.assign(codes.begin(), codes.end());
          for (uint32_t code : codes)
            if (code >= (1u << g.bits)) throw ContainerError("code exceeds group bit-width");
        } else if (len != 0) {
          throw ContainerError("degenerate group carries payload");
        } else if (g.bits != 0) {
          g.codes.assign(n, 0);
        }
        auto values = dequantize_group(g, n);
        out.channel_streams[c].insert(out.channel_streams[c].end(), values.begin(), values.end());
      }
    }
    if (!r.done()) throw ContainerError("trailing group record bytes");
  }

  // SH codebook.
  ShCodebook cb;
  {
    ByteReader r(sections[size_t(Section::ShCodebook) - 1]);
    cb.k = r.u32();
    cb.r = r.u32();
    cb.dim = r.u16();
    uint32_t rows = r.u32();
    if (rows != m) throw ContainerError("SH row count does not match octree leaves");
    size_t entry_count = size_t(cb.k + cb.r) * cb.dim;
    cb.entries.resize(entry_count);
    for (auto& v : cb.entries) v = r.f32();
    uint32_t hi_len = r.u32();
    auto hi_bytes = r.bytes(hi_len);
    uint32_t lo_len = r.u32();
    auto lo_bytes = r.bytes(lo_len);
    if (!r.done()) throw ContainerError("trailing SH bytes");
    if (cb.dim > 0) {
      auto hi = entropy_decode(hi_bytes, assign_hi_table, m);
      auto lo = entropy_decode(lo_bytes, assign_lo_table, m);
      cb.assignments.resize(m);
      for (size_t i = 0; i < m; ++i) cb.assignments[i] = (hi[i] << 8) | lo[i];
    } else {
      if (hi_len != 0 || lo_len != 0) throw ContainerError("SH payload for empty codebook");
      cb.assignments.assign(m, 0);
    }
  }
  out.sh_k = cb.k;
  out.sh_r = cb.r;

  // Reassemble the cloud.
  int expected_dim = GaussianCloud::rest_dim(sh_degree);
  if (int(cb.dim) != expected_dim) throw ContainerError("SH dimension does not match degree");
  out.cloud.resize(m, sh_degree);
  for (size_t i = 0; i < m; ++i) {
    Vec3 c = grid.voxel_center(grid.keys[i]);
    out.cloud.positions[i * 3 + 0] = float(c.x);
    out.cloud.positions[i * 3 + 1] = float(c.y);
    out.cloud.positions[i * 3 + 2] = float(c.z);
  }
  std::vector<ChannelStream> streams(kChannelCount);
  size_t dc_index = 0;
  for (int c = 0; c < kChannelCount; ++c) {
    streams[c].transformed = out.plan.raht[c];
    if (out.plan.raht[c]) streams[c].dc = dc[dc_index++];
    streams[c].values = out.channel_streams[c];
  }
  disassemble_channels(streams, raht, out.cloud);
  if (expected_dim > 0) out.cloud.sh_rest = decode_sh(cb, m);
  out.cloud.validate();
  return out;
}

/// The representative channel width used to derive scale-channel transform
/// flags from an explicit bit-width matrix.
inline TransformPlan plan_for_widths(const BitWidthMatrix& q, const GroupPartition& partition) {
  std::array<int, kChannelCount> rep{};
  for (int c = 0; c < kChannelCount; ++c) {
    int w = 0;
    for (size_t j = 0; j < partition.block_count(c); ++j) w = std::max(w, int(q.at(c, j)));
    rep[c] = w;
  }
  return TransformPlan::for_bit_widths(rep);
}

/// One-shot encode at fixed tau and bit-widths (no search). When
/// budget_bytes > 0, leftover budget retains original SH vectors.
inline BuildResult encode_fixed(const GaussianCloud& cloud, const std::vector<Camera>& cameras,
                                double tau, const BitWidthMatrix& q, const EncodeConfig& cfg,
                                double budget_bytes = 0) {
  ImportanceScores scores = ImportanceScores::compute(cloud, cameras, cfg.beta);
  PreparedModel pm = prepare_model(cloud, scores.joint, tau, cfg);

  GroupPartition partition =
      GroupPartition::build(pm.stream_lengths(TransformPlan::all_raht()), cfg.blocks);
  TransformPlan plan = plan_for_widths(q, partition);

  BuildResult r0 = build_container(pm, q, plan, 0, tau);
  if (budget_bytes <= 0 || pm.dedup.rest_dim() == 0) return r0;
  double per_vec = double(pm.dedup.rest_dim()) * 4.0 + 2.0;
  uint32_t retention =
      plan_retention(pm.dedup.count, r0.total_bytes, budget_bytes, per_vec);
  if (retention == 0) return r0;
  return build_container(pm, q, plan, retention, tau);
}

}  // namespace mgs
