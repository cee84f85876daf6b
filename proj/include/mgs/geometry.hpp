#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mgs/common.hpp"
#include "mgs/gs_model.hpp"

namespace mgs {

// Morton keys interleave the per-axis voxel indices with x in the least
// significant position of each 3-bit level: bit 3L holds x, 3L+1 holds y,
// 3L+2 holds z. A node's child octant index is therefore (z<<2)|(y<<1)|x,
// and the bottom-up RAHT sweep pairs along x, then y, then z per level.

namespace detail {

inline uint64_t spread_bits_3(uint64_t v) {
  v &= 0x1fffff;  // 21 bits
  v = (v | (v << 32)) & 0x1f00000000ffffull;
  v = (v | (v << 16)) & 0x1f0000ff0000ffull;
  v = (v | (v << 8)) & 0x100f00f00f00f00full;
  v = (v | (v << 4)) & 0x10c30c30c30c30c3ull;
  v = (v | (v << 2)) & 0x1249249249249249ull;
  return v;
}

inline uint64_t compact_bits_3(uint64_t v) {
  v &= 0x1249249249249249ull;
  v = (v | (v >> 2)) & 0x10c30c30c30c30c3ull;
  v = (v | (v >> 4)) & 0x100f00f00f00f00full;
  v = (v | (v >> 8)) & 0x1f0000ff0000ffull;
  v = (v | (v >> 16)) & 0x1f00000000ffffull;
  v = (v | (v >> 32)) & 0x1fffff;
  return v;
}

}  // namespace detail

inline uint64_t morton_encode(uint32_t ix, uint32_t iy, uint32_t iz) {
  return detail::spread_bits_3(ix) | (detail::spread_bits_3(iy) << 1) |
         (detail::spread_bits_3(iz) << 2);
}

inline void morton_decode(uint64_t key, uint32_t& ix, uint32_t& iy, uint32_t& iz) {
  ix = uint32_t(detail::compact_bits_3(key));
  iy = uint32_t(detail::compact_bits_3(key >> 1));
  iz = uint32_t(detail::compact_bits_3(key >> 2));
}

struct Aabb {
  Vec3 min, max;
};

/// Tight bounding box expanded by a relative margin so boundary points stay
/// strictly inside.
inline Aabb compute_aabb(const std::vector<float>& positions, double margin = 1e-6) {
  if (positions.empty()) throw std::invalid_argument("empty position array");
  Aabb box;
  box.min = {positions[0], positions[1], positions[2]};
  box.max = box.min;
  for (size_t i = 0; i < positions.size() / 3; ++i) {
    double p[3] = {positions[i * 3], positions[i * 3 + 1], positions[i * 3 + 2]};
    box.min.x = std::min(box.min.x, p[0]);
    box.min.y = std::min(box.min.y, p[1]);
    box.min.z = std::min(box.min.z, p[2]);
    box.max.x = std::max(box.max.x, p[0]);
    box.max.y = std::max(box.max.y, p[1]);
    box.max.z = std::max(box.max.z, p[2]);
  }
  Vec3 extent = box.max - box.min;
  double pad_base = std::max({std::abs(extent.x), std::abs(extent.y), std::abs(extent.z), 1.0});
  double pad = pad_base * margin;
  box.min = box.min - Vec3{pad, pad, pad};
  box.max = box.max + Vec3{pad, pad, pad};

  // The container stores the box as f32; snap outward to those values now so
  // the encoder and decoder voxelize against bit-identical bounds.
  auto snap = [](double v, bool up) {
    float f = float(v);
    if (!up && double(f) > v) f = std::nextafterf(f, -std::numeric_limits<float>::infinity());
    if (up && double(f) < v) f = std::nextafterf(f, std::numeric_limits<float>::infinity());
    return double(f);
  };
  box.min = {snap(box.min.x, false), snap(box.min.y, false), snap(box.min.z, false)};
  box.max = {snap(box.max.x, true), snap(box.max.y, true), snap(box.max.z, true)};
  return box;
}

/// Deduplicated, sorted voxel keys over an axis-aligned grid of 2^depth
/// cells per side.
struct VoxelGrid {
  Aabb aabb;
  int depth = 0;                   // d in [1,21]
  std::vector<uint64_t> keys;      // strictly ascending Morton codes

  Vec3 voxel_size() const {
    double cells = double(uint64_t(1) << depth);
    Vec3 e = aabb.max - aabb.min;
    return {e.x / cells, e.y / cells, e.z / cells};
  }
  Vec3 voxel_center(uint64_t key) const {
    uint32_t ix, iy, iz;
    morton_decode(key, ix, iy, iz);
    Vec3 vs = voxel_size();
    return {aabb.min.x + (ix + 0.5) * vs.x, aabb.min.y + (iy + 0.5) * vs.y,
            aabb.min.z + (iz + 0.5) * vs.z};
  }
};

struct VoxelizeResult {
  VoxelGrid grid;
  std::vector<uint32_t> assignment;  // input index -> voxel index (Morton order)
};

inline VoxelizeResult voxelize(const std::vector<float>& positions, int depth, const Aabb& aabb) {
  if (depth < 1 || depth > 21) throw std::invalid_argument("octree depth must be in [1,21]");
  size_t n = positions.size() / 3;
  uint32_t max_index = (uint32_t(1) << depth) - 1;
  Vec3 e = aabb.max - aabb.min;
  if (!(e.x > 0 && e.y > 0 && e.z > 0)) throw std::invalid_argument("degenerate aabb");
  double cells = double(uint64_t(1) << depth);

  std::vector<uint64_t> raw(n);
  for (size_t i = 0; i < n; ++i) {
    double p[3] = {positions[i * 3], positions[i * 3 + 1], positions[i * 3 + 2]};
    for (double v : p)
      if (!std::isfinite(v)) throw ParseError("non-finite position at index " + std::to_string(i));
    auto cell = [&](double v, double lo, double extent) -> uint32_t {
      double t = (v - lo) / extent * cells;
      long long c = (long long)std::floor(t);
      c = std::clamp(c, 0ll, (long long)max_index);
      return uint32_t(c);
    };
    raw[i] = morton_encode(cell(p[0], aabb.min.x, e.x), cell(p[1], aabb.min.y, e.y),
                           cell(p[2], aabb.min.z, e.z));
  }

  std::vector<uint64_t> keys = raw;
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  VoxelizeResult out;
  out.grid.aabb = aabb;
  out.grid.depth = depth;
  out.grid.keys = std::move(keys);
  out.assignment.resize(n);
  for (size_t i = 0; i < n; ++i) {
    auto it = std::lower_bound(out.grid.keys.begin(), out.grid.keys.end(), raw[i]);
    out.assignment[i] = uint32_t(it - out.grid.keys.begin());
  }
  return out;
}

/// Averages co-voxel gaussians channel-by-channel and snaps positions to
/// voxel centers. Output is in Morton key order.
inline GaussianCloud dedup_average(const GaussianCloud& cloud, const VoxelGrid& grid,
                                   const std::vector<uint32_t>& assignment) {
  size_t m = grid.keys.size();
  GaussianCloud out;
  out.resize(m, cloud.sh_degree);
  size_t d = size_t(cloud.rest_dim());

  std::vector<uint32_t> group_size(m, 0);
  for (uint32_t a : assignment) ++group_size[a];

  // Accumulate in doubles, divide once.
  std::vector<double> quat(m * 4, 0), ls(m * 3, 0), op(m, 0), dc(m * 3, 0), rest(m * d, 0);
  for (size_t i = 0; i < cloud.count; ++i) {
    size_t g = assignment[i];
    for (int a = 0; a < 4; ++a) quat[g * 4 + a] += cloud.quaternions[i * 4 + a];
    for (int a = 0; a < 3; ++a) ls[g * 3 + a] += cloud.log_scales[i * 3 + a];
    op[g] += cloud.opacity_logits[i];
    for (int a = 0; a < 3; ++a) dc[g * 3 + a] += cloud.sh_dc[i * 3 + a];
    for (size_t a = 0; a < d; ++a) rest[g * d + a] += cloud.sh_rest[i * d + a];
  }
  for (size_t g = 0; g < m; ++g) {
    double inv = 1.0 / double(group_size[g]);
    Vec3 c = grid.voxel_center(grid.keys[g]);
    out.positions[g * 3 + 0] = float(c.x);
    out.positions[g * 3 + 1] = float(c.y);
    out.positions[g * 3 + 2] = float(c.z);
    for (int a = 0; a < 4; ++a) out.quaternions[g * 4 + a] = float(quat[g * 4 + a] * inv);
    for (int a = 0; a < 3; ++a) out.log_scales[g * 3 + a] = float(ls[g * 3 + a] * inv);
    out.opacity_logits[g] = float(op[g] * inv);
    for (int a = 0; a < 3; ++a) out.sh_dc[g * 3 + a] = float(dc[g * 3 + a] * inv);
    for (size_t a = 0; a < d; ++a) out.sh_rest[g * d + a] = float(rest[g * d + a] * inv);
  }
  return out;
}

/// Breadth-first occupancy bytes: one byte per occupied node at levels
/// 0..depth-1, bit k set iff child octant k is occupied.
struct OctreeStream {
  std::vector<uint8_t> occupancy;
  int depth = 0;
  Aabb aabb;
  uint32_t leaf_count = 0;
};

inline OctreeStream encode_octree(const VoxelGrid& grid) {
  OctreeStream stream;
  stream.depth = grid.depth;
  stream.aabb = grid.aabb;
  stream.leaf_count = uint32_t(grid.keys.size());

  // Level L nodes are key prefixes of length 3L bits. Keys are sorted, so
  // prefixes at every level are visited in ascending order.
  std::vector<uint64_t> prefixes = grid.keys;
  std::vector<std::vector<uint8_t>> level_bytes(grid.depth);
  for (int level = grid.depth - 1; level >= 0; --level) {
    std::vector<uint64_t> parents;
    parents.reserve(prefixes.size());
    auto& bytes = level_bytes[level];
    size_t i = 0;
    while (i < prefixes.size()) {
      uint64_t parent = prefixes[i] >> 3;
      uint8_t mask = 0;
      while (i < prefixes.size() && (prefixes[i] >> 3) == parent) {
        mask |= uint8_t(1u << (prefixes[i] & 7));
        ++i;
      }
      parents.push_back(parent);
      bytes.push_back(mask);
    }
    prefixes = std::move(parents);
  }
  for (auto& bytes : level_bytes)
    stream.occupancy.insert(stream.occupancy.end(), bytes.begin(), bytes.end());
  return stream;
}

inline VoxelGrid decode_octree(const OctreeStream& stream) {
  if (stream.depth < 1 || stream.depth > 21) throw ContainerError("octree depth out of range");
  VoxelGrid grid;
  grid.aabb = stream.aabb;
  grid.depth = stream.depth;

  std::vector<uint64_t> nodes = {0};  // root prefix
  size_t pos = 0;
  for (int level = 0; level < stream.depth; ++level) {
    std::vector<uint64_t> children;
    children.reserve(nodes.size() * 2);
    for (uint64_t prefix : nodes) {
      if (pos >= stream.occupancy.size()) throw ContainerError("truncated octree stream");
      uint8_t mask = stream.occupancy[pos++];
      if (mask == 0) throw ContainerError("zero occupancy byte in octree stream");
      for (int k = 0; k < 8; ++k)
        if (mask & (1u << k)) children.push_back((prefix << 3) | uint64_t(k));
    }
    nodes = std::move(children);
  }
  if (pos != stream.occupancy.size()) throw ContainerError("octree stream has trailing bytes");
  if (nodes.size() != stream.leaf_count)
    throw ContainerError("octree leaf count mismatch: header says " +
                         std::to_string(stream.leaf_count) + ", decoded " +
                         std::to_string(nodes.size()));
  grid.keys = std::move(nodes);
  return grid;
}

}  // namespace mgs
