#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mgs/entropy.hpp"

using namespace mgs;

namespace {

std::vector<uint32_t> random_stream(size_t n, uint32_t alphabet, uint64_t seed) {
  Rng rng(seed);
  std::vector<uint32_t> s(n);
  for (auto& v : s) v = uint32_t(rng.next_below(alphabet));
  return s;
}

}  // namespace

TEST_CASE("table widths sum to 2^16 and observed symbols keep width >= 1") {
  auto s = random_stream(5000, 37, 1);
  FrequencyTable t = build_table(s);
  REQUIRE(t.cum_freq.front() == 0);
  REQUIRE(t.cum_freq.back() == kFreqTotal);
  for (uint32_t i = 0; i < t.symbol_count; ++i) REQUIRE(t.width(i) >= 1);
}

TEST_CASE("uniform symbols over S=4 get width 16384 each") {
  std::vector<uint32_t> s = {0, 1, 2, 3, 0, 1, 2, 3};
  FrequencyTable t = build_table(s);
  for (uint32_t i = 0; i < 4; ++i) REQUIRE(t.width(i) == 16384);
}

TEST_CASE("single distinct symbol takes all width but the minimum of the others") {
  std::vector<uint32_t> s(10, 2);
  FrequencyTable t = build_table(s, 5);
  REQUIRE(t.width(2) == kFreqTotal - 4);
  for (uint32_t i : {0u, 1u, 3u, 4u}) REQUIRE(t.width(i) == 1);
}

TEST_CASE("symbols beyond the declared alphabet are rejected") {
  std::vector<uint32_t> s = {0, 7};
  REQUIRE_THROWS_AS(build_table(s, 4), std::invalid_argument);
  FrequencyTable t = build_table(std::vector<uint32_t>{0, 1, 2, 3});
  REQUIRE_THROWS_AS(entropy_encode(s, t), std::invalid_argument);
}

TEST_CASE("empty stream produces an empty payload") {
  FrequencyTable t = build_table(std::vector<uint32_t>{0, 1});
  REQUIRE(entropy_encode(std::vector<uint32_t>{}, t).empty());
  REQUIRE(entropy_decode(std::vector<uint8_t>{}, t, 0).empty());
}

TEST_CASE("round-trip on fuzzed streams") {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    uint32_t alphabet = 1 + uint32_t(rng.next_below(600));
    size_t n = rng.next_below(4000);
    auto s = random_stream(n, alphabet, rng.next_u64());
    FrequencyTable t = build_table(s, alphabet);
    auto payload = entropy_encode(s, t);
    auto back = entropy_decode(payload, t, n);
    REQUIRE(back == s);
  }
}

TEST_CASE("skewed symbols round-trip (carry propagation stress)") {
  // Heavy skew plus rare symbols pushes long 0xFF runs through the coder.
  Rng rng(7);
  std::vector<uint32_t> s;
  for (int i = 0; i < 200000; ++i) s.push_back(rng.next_below(1000) == 0 ? 1 + uint32_t(rng.next_below(255)) : 0);
  FrequencyTable t = build_table(s, 256);
  auto payload = entropy_encode(s, t);
  auto back = entropy_decode(payload, t, s.size());
  REQUIRE(back == s);
}

TEST_CASE("two-symbol p=(0.9,0.1) source compresses to ~0.469 bits/symbol") {
  // H = -(0.9 log2 0.9 + 0.1 log2 0.1) = 0.4690 bits.
  size_t n = 100000;
  Rng rng(5);
  std::vector<uint32_t> s(n);
  size_t ones = 0;
  for (auto& v : s) {
    v = rng.next_double() < 0.1 ? 1u : 0u;
    ones += v;
  }
  FrequencyTable t = build_table(s);
  auto payload = entropy_encode(s, t);

  double p1 = double(ones) / double(n);
  double h = -(p1 * std::log2(p1) + (1 - p1) * std::log2(1 - p1));
  double bits = double(payload.size()) * 8;
  REQUIRE(bits <= h * double(n) * 1.02 + 256 * 8);
  REQUIRE(bits >= h * double(n) * 0.98);
  // Near the analytic entropy of the true source.
  REQUIRE(h == Catch::Approx(0.469).margin(0.01));
}

TEST_CASE("payload stays within 2% + 32 bytes of the table cross-entropy") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    uint32_t alphabet = 2 + uint32_t(rng.next_below(100));
    auto s = random_stream(3000 + rng.next_below(5000), alphabet, rng.next_u64());
    FrequencyTable t = build_table(s, alphabet);
    auto payload = entropy_encode(s, t);
    double h_bits = t.cross_entropy_bits(s);
    REQUIRE(double(payload.size()) * 8 <= h_bits * 1.02 + 32 * 8);
  }
}

TEST_CASE("encode payload respects the empirical entropy lower bound") {
  Rng rng(23);
  auto s = random_stream(20000, 17, rng.next_u64());
  FrequencyTable t = build_table(s);
  auto payload = entropy_encode(s, t);
  double bound_bits = entropy_lower_bound(s, s.size());
  REQUIRE(double(payload.size()) * 8 >= bound_bits - 32 * 8);
}

TEST_CASE("entropy_lower_bound trivial cases") {
  std::vector<uint32_t> constant(100, 3);
  REQUIRE(entropy_lower_bound(constant, 100) == 0.0);
  auto uniform = random_stream(1 << 16, 1 << 8, 3);
  // Uniform over 2^8 symbols: ~8 bits each, scaled by the reserve count.
  REQUIRE(entropy_lower_bound(uniform, 1000) == Catch::Approx(8000.0).epsilon(0.01));
}

TEST_CASE("corrupt and truncated streams raise typed errors") {
  auto s = random_stream(5000, 64, 31);
  FrequencyTable t = build_table(s, 64);
  auto payload = entropy_encode(s, t);

  SECTION("truncation") {
    std::vector<uint8_t> cut(payload.begin(), payload.begin() + payload.size() / 2);
    REQUIRE_THROWS_AS(entropy_decode(cut, t, s.size()), ContainerError);
  }
  SECTION("trailing garbage") {
    auto noisy = payload;
    for (int i = 0; i < 64; ++i) noisy.push_back(uint8_t(i * 37));
    REQUIRE_THROWS_AS(entropy_decode(noisy, t, s.size()), ContainerError);
  }
}

TEST_CASE("degenerate single-symbol alphabet needs no payload") {
  std::vector<uint32_t> s(1000, 0);
  FrequencyTable t = build_table(s, 1);
  auto payload = entropy_encode(s, t);
  REQUIRE(payload.empty());
  auto back = entropy_decode(payload, t, 1000);
  REQUIRE(back == s);
}

TEST_CASE("LZ stage is bit-exactly invertible") {
  Rng rng(41);
  for (size_t n : {size_t(0), size_t(1), size_t(100), size_t(100000)}) {
    std::vector<uint8_t> data(n);
    for (auto& b : data) b = uint8_t(rng.next_below(7));  // compressible
    auto packed = lz_compress(data);
    REQUIRE(lz_decompress(packed) == data);
  }
  std::vector<uint8_t> junk = {1, 2, 3};
  REQUIRE_THROWS_AS(lz_decompress(junk), ContainerError);
}
