#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mgs {

// ---------------------------------------------------------------------------
// Error taxonomy. Each maps to one CLI exit code.
// ---------------------------------------------------------------------------

/// Malformed input (PLY header, camera JSON, flag values).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// A size budget that cannot be met; carries the closest achievable size.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, double min_achievable_bytes)
      : std::runtime_error(what), min_achievable_bytes(min_achievable_bytes) {}
  double min_achievable_bytes = 0.0;
};

/// Corrupt or unsupported container bytes.
class ContainerError : public std::runtime_error {
 public:
  explicit ContainerError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Small fixed-size linear algebra. Doubles throughout; the codec stores f32
// but transforms in f64.
// ---------------------------------------------------------------------------

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

struct Mat3 {
  // Row-major.
  std::array<double, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return r;
  }
  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  double frobenius_distance(const Mat3& o) const {
    double s = 0;
    for (int i = 0; i < 9; ++i) {
      double d = m[i] - o.m[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
};

struct Mat4 {
  // Row-major.
  std::array<double, 16> m{};

  static Mat4 identity() {
    Mat4 r;
    for (int i = 0; i < 4; ++i) r.m[i * 4 + i] = 1.0;
    return r;
  }
  double& operator()(int r, int c) { return m[r * 4 + c]; }
  double operator()(int r, int c) const { return m[r * 4 + c]; }
  Mat3 rotation() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(i, j);
    return r;
  }
  Vec3 transform_point(const Vec3& p) const {
    return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
            m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
            m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
  }
};

struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quat normalized() const {
    double n = norm();
    if (n == 0.0) return {1, 0, 0, 0};
    return {w / n, x / n, y / n, z / n};
  }
};

// ---------------------------------------------------------------------------
// Deterministic RNG helpers. std::mt19937_64 plus hand-rolled draws so the
// byte streams do not depend on the standard library's distribution
// implementations.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {
    // splitmix64 warm-up so nearby seeds diverge.
    for (int i = 0; i < 4; ++i) next_u64();
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be > 0.
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Parallelism. Worker count is a process-wide setting; chunk boundaries are
// fixed so results never depend on how many threads actually run.
// ---------------------------------------------------------------------------

inline unsigned& thread_count_ref() {
  static unsigned count = std::max(1u, std::thread::hardware_concurrency());
  return count;
}

inline void set_thread_count(unsigned n) { thread_count_ref() = std::max(1u, n); }
inline unsigned thread_count() { return thread_count_ref(); }

/// Runs fn(chunk_index, begin, end) over [0, n) split into fixed chunks.
/// Chunks are disjoint, so fn may write to per-chunk or per-index slots
/// without synchronization.
inline void parallel_chunks(size_t n, size_t chunk_size,
                            const std::function<void(size_t, size_t, size_t)>& fn) {
  if (n == 0) return;
  chunk_size = std::max<size_t>(1, chunk_size);
  size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  unsigned workers = std::min<unsigned>(thread_count(), (unsigned)n_chunks);
  if (workers <= 1) {
    for (size_t c = 0; c < n_chunks; ++c)
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic_size_t next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      try {
        for (;;) {
          size_t c = next.fetch_add(1);
          if (c >= n_chunks) break;
          fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline size_t chunk_count(size_t n, size_t chunk_size) {
  chunk_size = std::max<size_t>(1, chunk_size);
  return n == 0 ? 0 : (n + chunk_size - 1) / chunk_size;
}

// ---------------------------------------------------------------------------
// Little-endian byte buffer IO used by every on-disk format.
// ---------------------------------------------------------------------------

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { append(&v, 2); }
  void u32(uint32_t v) { append(&v, 4); }
  void u64(uint64_t v) { append(&v, 8); }
  void f32(float v) { append(&v, 4); }
  void f64(double v) { append(&v, 8); }
  void bytes(const uint8_t* p, size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void bytes(const std::vector<uint8_t>& b) { bytes(b.data(), b.size()); }

  const std::vector<uint8_t>& data() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }
  size_t size() const { return buf_.size(); }

 private:
  void append(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);  // little-endian host assumed
  }
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const std::vector<uint8_t>& b) : data_(b.data()), size_(b.size()) {}

  uint8_t u8() { return read<uint8_t>(); }
  uint16_t u16() { return read<uint16_t>(); }
  uint32_t u32() { return read<uint32_t>(); }
  uint64_t u64() { return read<uint64_t>(); }
  float f32() { return read<float>(); }
  double f64() { return read<double>(); }

  std::vector<uint8_t> bytes(size_t n) {
    require(n);
    std::vector<uint8_t> out(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return out;
  }
  void skip(size_t n) {
    require(n);
    pos_ += n;
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return size_ - pos_; }
  bool done() const { return pos_ == size_; }

 private:
  template <typename T>
  T read() {
    require(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void require(size_t n) const {
    if (pos_ + n > size_) throw ContainerError("unexpected end of data");
  }
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

}  // namespace mgs
