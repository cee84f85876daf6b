#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <vector>

#include "mgs/geometry.hpp"

using namespace mgs;

namespace {

Aabb unit_box() { return {{0, 0, 0}, {1, 1, 1}}; }

std::vector<float> random_points(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> p(n * 3);
  for (auto& v : p) v = float(rng.next_double());
  return p;
}

/// Direct floor-quantization oracle for one point.
uint64_t oracle_key(const float* p, int depth, const Aabb& box) {
  double cells = double(uint64_t(1) << depth);
  uint32_t idx[3];
  double lo[3] = {box.min.x, box.min.y, box.min.z};
  double hi[3] = {box.max.x, box.max.y, box.max.z};
  for (int a = 0; a < 3; ++a) {
    double t = (double(p[a]) - lo[a]) / (hi[a] - lo[a]) * cells;
    long long c = (long long)std::floor(t);
    c = std::clamp(c, 0ll, (long long)((1u << depth) - 1));
    idx[a] = uint32_t(c);
  }
  return morton_encode(idx[0], idx[1], idx[2]);
}

GaussianCloud tiny_cloud(const std::vector<float>& positions) {
  GaussianCloud c;
  c.resize(positions.size() / 3, 0);
  c.positions = positions;
  return c;
}

}  // namespace

TEST_CASE("morton encode/decode round-trips") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    uint32_t x = uint32_t(rng.next_below(1u << 21));
    uint32_t y = uint32_t(rng.next_below(1u << 21));
    uint32_t z = uint32_t(rng.next_below(1u << 21));
    uint32_t bx, by, bz;
    morton_decode(morton_encode(x, y, z), bx, by, bz);
    REQUIRE(bx == x);
    REQUIRE(by == y);
    REQUIRE(bz == z);
  }
}

TEST_CASE("depth-1 octant centers map to keys 0..7") {
  std::vector<float> pts;
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        pts.push_back(0.25f + 0.5f * float(x));
        pts.push_back(0.25f + 0.5f * float(y));
        pts.push_back(0.25f + 0.5f * float(z));
      }
  auto r = voxelize(pts, 1, unit_box());
  REQUIRE(r.grid.keys.size() == 8);
  for (uint64_t k = 0; k < 8; ++k) REQUIRE(r.grid.keys[k] == k);
}

TEST_CASE("two co-voxel points share one index") {
  std::vector<float> pts = {0.1f, 0.1f, 0.1f, 0.11f, 0.11f, 0.11f, 0.9f, 0.9f, 0.9f};
  auto r = voxelize(pts, 2, unit_box());
  REQUIRE(r.grid.keys.size() == 2);
  REQUIRE(r.assignment[0] == r.assignment[1]);
  REQUIRE(r.assignment[0] != r.assignment[2]);
}

TEST_CASE("random points at depth 10: centers within half a voxel, keys match the oracle") {
  auto pts = random_points(10000, 99);
  int depth = 10;
  auto box = unit_box();
  auto r = voxelize(pts, depth, box);
  Vec3 vs = r.grid.voxel_size();
  for (size_t i = 0; i < pts.size() / 3; ++i) {
    uint64_t key = r.grid.keys[r.assignment[i]];
    REQUIRE(key == oracle_key(&pts[i * 3], depth, box));
    Vec3 c = r.grid.voxel_center(key);
    REQUIRE(std::abs(c.x - pts[i * 3 + 0]) <= vs.x / 2 + 1e-12);
    REQUIRE(std::abs(c.y - pts[i * 3 + 1]) <= vs.y / 2 + 1e-12);
    REQUIRE(std::abs(c.z - pts[i * 3 + 2]) <= vs.z / 2 + 1e-12);
  }
}

TEST_CASE("voxelize rejects non-finite positions") {
  std::vector<float> pts = {0.5f, std::numeric_limits<float>::infinity(), 0.5f};
  REQUIRE_THROWS_AS(voxelize(pts, 4, unit_box()), ParseError);
}

TEST_CASE("keys are strictly ascending (Morton order equals sorted order)") {
  auto pts = random_points(5000, 3);
  auto r = voxelize(pts, 8, unit_box());
  auto sorted = r.grid.keys;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(r.grid.keys == sorted);
  REQUIRE(std::adjacent_find(r.grid.keys.begin(), r.grid.keys.end()) == r.grid.keys.end());
}

TEST_CASE("dedup averaging: singleton groups permute, shared voxel averages") {
  SECTION("two logits 1 and 3 average to 2") {
    std::vector<float> pts = {0.1f, 0.1f, 0.1f, 0.12f, 0.12f, 0.12f};
    auto c = tiny_cloud(pts);
    c.opacity_logits = {1.f, 3.f};
    auto r = voxelize(pts, 2, unit_box());
    auto merged = dedup_average(c, r.grid, r.assignment);
    REQUIRE(merged.count == 1);
    REQUIRE(merged.opacity_logits[0] == Catch::Approx(2.0));
  }
  SECTION("positions move to voxel centers") {
    std::vector<float> pts = {0.1f, 0.2f, 0.3f};
    auto c = tiny_cloud(pts);
    auto r = voxelize(pts, 1, unit_box());
    auto merged = dedup_average(c, r.grid, r.assignment);
    REQUIRE(merged.positions[0] == Catch::Approx(0.25));
    REQUIRE(merged.positions[1] == Catch::Approx(0.25));
    REQUIRE(merged.positions[2] == Catch::Approx(0.25));
  }
}

TEST_CASE("dedup matches a scatter-mean oracle on random groups") {
  auto pts = random_points(2000, 17);
  GaussianCloud c = tiny_cloud(pts);
  Rng rng(18);
  for (auto& v : c.opacity_logits) v = float(rng.next_normal());
  for (auto& v : c.quaternions) v = float(rng.next_normal());
  for (auto& v : c.log_scales) v = float(rng.next_normal());
  for (auto& v : c.sh_dc) v = float(rng.next_normal());

  auto r = voxelize(pts, 3, unit_box());
  auto merged = dedup_average(c, r.grid, r.assignment);

  // Independent group-by-mean.
  std::map<uint32_t, std::pair<double, int>> sums;
  for (size_t i = 0; i < c.count; ++i) {
    auto& slot = sums[r.assignment[i]];
    slot.first += c.opacity_logits[i];
    slot.second += 1;
  }
  for (auto& [g, slot] : sums)
    REQUIRE(merged.opacity_logits[g] == Catch::Approx(slot.first / slot.second).margin(1e-6));

  // Group-size-weighted global sum is preserved per channel.
  double before = 0, after = 0;
  std::vector<int> group_size(merged.count, 0);
  for (auto a : r.assignment) group_size[a]++;
  for (size_t i = 0; i < c.count; ++i) before += c.opacity_logits[i];
  for (size_t g = 0; g < merged.count; ++g) after += double(merged.opacity_logits[g]) * group_size[g];
  REQUIRE(after == Catch::Approx(before).margin(1e-3));
}

TEST_CASE("single voxel at depth 2 encodes to two power-of-two bytes") {
  std::vector<float> pts = {0.6f, 0.7f, 0.8f};
  auto r = voxelize(pts, 2, unit_box());
  auto s = encode_octree(r.grid);
  REQUIRE(s.occupancy.size() == 2);
  for (uint8_t b : s.occupancy) {
    REQUIRE(b != 0);
    REQUIRE((b & (b - 1)) == 0);
  }
  auto back = decode_octree(s);
  REQUIRE(back.keys == r.grid.keys);
}

TEST_CASE("full depth-1 grid encodes to a single 255 byte") {
  VoxelGrid g;
  g.aabb = unit_box();
  g.depth = 1;
  g.keys = {0, 1, 2, 3, 4, 5, 6, 7};
  auto s = encode_octree(g);
  REQUIRE(s.occupancy.size() == 1);
  REQUIRE(s.occupancy[0] == 255);
  auto back = decode_octree(s);
  REQUIRE(back.keys == g.keys);
}

TEST_CASE("random grids round-trip exactly and stream length is bounded") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    int depth = 1 + int(rng.next_below(6));
    size_t n = 1 + rng.next_below(200);
    VoxelGrid g;
    g.aabb = unit_box();
    g.depth = depth;
    std::vector<uint64_t> keys(n);
    for (auto& k : keys) k = rng.next_below(uint64_t(1) << (3 * depth));
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    g.keys = keys;

    auto s = encode_octree(g);
    size_t m = g.keys.size();
    REQUIRE(s.occupancy.size() >= size_t(depth));
    REQUIRE(s.occupancy.size() <= m * size_t(depth));
    auto back = decode_octree(s);
    REQUIRE(back.keys == g.keys);

    // Re-encoding the decoded grid reproduces the stream bit-exactly.
    auto s2 = encode_octree(back);
    REQUIRE(s2.occupancy == s.occupancy);
  }
}

TEST_CASE("decoder rejects malformed streams with typed errors") {
  VoxelGrid g;
  g.aabb = unit_box();
  g.depth = 3;
  g.keys = {1, 9, 200};
  auto s = encode_octree(g);

  SECTION("truncated") {
    auto bad = s;
    bad.occupancy.pop_back();
    REQUIRE_THROWS_AS(decode_octree(bad), ContainerError);
  }
  SECTION("zero byte") {
    auto bad = s;
    bad.occupancy[0] = 0;
    REQUIRE_THROWS_AS(decode_octree(bad), ContainerError);
  }
  SECTION("leaf count mismatch") {
    auto bad = s;
    bad.leaf_count += 1;
    REQUIRE_THROWS_AS(decode_octree(bad), ContainerError);
  }
  SECTION("trailing bytes") {
    auto bad = s;
    bad.occupancy.push_back(1);
    REQUIRE_THROWS_AS(decode_octree(bad), ContainerError);
  }
}
