#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mgs/common.hpp"

namespace mgs {

struct KmeansResult {
  std::vector<float> centroids;      // k x dim
  std::vector<uint32_t> assignments;  // one per input row
};

namespace detail {

/// Assignment scores laid out for vectorization: centroids transposed to
/// [dim][k] so the inner loop runs contiguously across centroids. The score
/// is ||c||^2/2 - x.c, which orders like the squared distance; ties break
/// toward the lower centroid id.
struct AssignScratch {
  std::vector<float> transposed;  // dim x k
  std::vector<float> half_norms;  // k

  void refresh(const std::vector<float>& centroids, size_t k, size_t dim) {
    transposed.resize(dim * k);
    half_norms.resize(k);
    for (size_t c = 0; c < k; ++c) {
      double n = 0;
      for (size_t d = 0; d < dim; ++d) {
        float v = centroids[c * dim + d];
        transposed[d * k + c] = v;
        n += double(v) * double(v);
      }
      half_norms[c] = float(0.5 * n);
    }
  }
};

inline uint32_t nearest_centroid(const float* x, const AssignScratch& scratch, size_t k,
                                 size_t dim, std::vector<float>& score_buf) {
  score_buf.resize(k);
  float* score = score_buf.data();
  std::copy(scratch.half_norms.begin(), scratch.half_norms.end(), score);
  for (size_t d = 0; d < dim; ++d) {
    float xd = x[d];
    const float* row = &scratch.transposed[d * k];
    for (size_t c = 0; c < k; ++c) score[c] -= xd * row[c];
  }
  uint32_t best = 0;
  float best_score = score[0];
  for (size_t c = 1; c < k; ++c)
    if (score[c] < best_score) {
      best_score = score[c];
      best = uint32_t(c);
    }
  return best;
}

inline void assign_all(const std::vector<float>& vectors, size_t rows, size_t dim,
                       const std::vector<float>& centroids, size_t k,
                       std::vector<uint32_t>& out) {
  AssignScratch scratch;
  scratch.refresh(centroids, k, dim);
  out.resize(rows);
  parallel_chunks(rows, 512, [&](size_t, size_t begin, size_t end) {
    std::vector<float> score_buf;
    for (size_t i = begin; i < end; ++i)
      out[i] = nearest_centroid(&vectors[i * dim], scratch, k, dim, score_buf);
  });
}

}  // namespace detail

/// Mini-batch k-means (random seeded centers, per-center running-mean
/// updates, final full assignment). A batch that covers the whole input
/// degenerates to exact Lloyd iterations. Deterministic given the seed at
/// any thread count.
inline KmeansResult kmeans_batched(const std::vector<float>& vectors, size_t rows, size_t dim,
                                   size_t k, int iters, size_t batch, uint64_t seed) {
  if (rows == 0 || dim == 0) throw std::invalid_argument("k-means needs a nonempty matrix");
  if (k == 0 || k > rows) throw std::invalid_argument("k must be in [1, rows]");
  if (vectors.size() != rows * dim) throw std::invalid_argument("matrix shape mismatch");

  Rng rng(seed);
  KmeansResult res;
  res.centroids.resize(k * dim);

  // Seed with k distinct rows (partial Fisher-Yates over the index range).
  {
    std::vector<uint32_t> idx(rows);
    for (size_t i = 0; i < rows; ++i) idx[i] = uint32_t(i);
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + size_t(rng.next_below(rows - i));
      std::swap(idx[i], idx[j]);
      const float* src = &vectors[size_t(idx[i]) * dim];
      std::copy(src, src + dim, &res.centroids[i * dim]);
    }
  }

  std::vector<uint64_t> counts(k, 0);
  std::vector<uint32_t> batch_idx, batch_assign;
  bool full_batch = batch >= rows;

  for (int it = 0; it < iters; ++it) {
    if (full_batch) {
      batch_idx.resize(rows);
      for (size_t i = 0; i < rows; ++i) batch_idx[i] = uint32_t(i);
    } else {
      batch_idx.resize(batch);
      for (auto& i : batch_idx) i = uint32_t(rng.next_below(rows));
    }

    detail::AssignScratch scratch;
    scratch.refresh(res.centroids, k, dim);
    batch_assign.resize(batch_idx.size());
    parallel_chunks(batch_idx.size(), 512, [&](size_t, size_t begin, size_t end) {
      std::vector<float> score_buf;
      for (size_t i = begin; i < end; ++i)
        batch_assign[i] = detail::nearest_centroid(&vectors[size_t(batch_idx[i]) * dim], scratch,
                                                   k, dim, score_buf);
    });

    if (full_batch) {
      // Exact Lloyd step: centers move to their cluster means; empty
      // clusters keep their previous position.
      std::vector<double> sums(k * dim, 0.0);
      std::vector<uint64_t> sizes(k, 0);
      for (size_t i = 0; i < rows; ++i) {
        uint32_t c = batch_assign[i];
        ++sizes[c];
        const float* x = &vectors[i * dim];
        for (size_t d = 0; d < dim; ++d) sums[size_t(c) * dim + d] += x[d];
      }
      for (size_t c = 0; c < k; ++c) {
        if (sizes[c] == 0) continue;
        for (size_t d = 0; d < dim; ++d)
          res.centroids[c * dim + d] = float(sums[c * dim + d] / double(sizes[c]));
      }
    } else {
      // Sculley-style per-center running mean over the sampled batch.
      for (size_t i = 0; i < batch_idx.size(); ++i) {
        uint32_t c = batch_assign[i];
        double eta = 1.0 / double(++counts[c]);
        const float* x = &vectors[size_t(batch_idx[i]) * dim];
        float* ce = &res.centroids[size_t(c) * dim];
        for (size_t d = 0; d < dim; ++d) ce[d] = float((1.0 - eta) * ce[d] + eta * x[d]);
      }
    }
  }

  detail::assign_all(vectors, rows, dim, res.centroids, k, res.assignments);

  // Empty-cluster repair: move each empty center to the point farthest from
  // its current centroid, then refresh assignments once.
  {
    std::vector<uint64_t> sizes(k, 0);
    for (uint32_t a : res.assignments) ++sizes[a];
    bool repaired = false;
    std::vector<char> taken(rows, 0);
    for (size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      double far_d = -1.0;
      size_t far_i = 0;
      for (size_t i = 0; i < rows; ++i) {
        if (taken[i]) continue;
        uint32_t a = res.assignments[i];
        const float* x = &vectors[i * dim];
        const float* ce = &res.centroids[size_t(a) * dim];
        double d2 = 0;
        for (size_t d = 0; d < dim; ++d) {
          double r = double(x[d]) - double(ce[d]);
          d2 += r * r;
        }
        if (d2 > far_d) {
          far_d = d2;
          far_i = i;
        }
      }
      const float* src = &vectors[far_i * dim];
      std::copy(src, src + dim, &res.centroids[c * dim]);
      taken[far_i] = 1;
      repaired = true;
    }
    if (repaired) detail::assign_all(vectors, rows, dim, res.centroids, k, res.assignments);
  }
  return res;
}

/// Codebook with k learned entries plus r verbatim high-importance rows.
struct ShCodebook {
  uint32_t k = 0, r = 0;
  uint32_t dim = 0;
  std::vector<float> entries;         // (k + r) x dim
  std::vector<uint32_t> assignments;  // per row, in [0, k + r)
};

/// Leftover-budget retention count: how many original vectors fit after the
/// essential components are paid for.
inline uint32_t plan_retention(size_t row_count, double essential_bytes, double budget_bytes,
                               double bytes_per_vector) {
  if (bytes_per_vector <= 0) throw std::invalid_argument("bytes_per_vector must be positive");
  double leftover = budget_bytes - essential_bytes;
  if (leftover <= 0) return 0;
  double r = std::floor(leftover / bytes_per_vector);
  return uint32_t(std::min<double>(r, double(row_count)));
}

/// Top-r rows by importance; ties break toward the lower index.
inline std::vector<uint32_t> retention_indices(const std::vector<double>& importance, uint32_t r) {
  std::vector<uint32_t> order(importance.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = uint32_t(i);
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (importance[a] != importance[b]) return importance[a] > importance[b];
    return a < b;
  });
  order.resize(std::min<size_t>(r, order.size()));
  return order;
}

/// Clusters all rows, then overrides the top-r important rows with verbatim
/// entries appended after the k centroids.
inline ShCodebook encode_sh(const std::vector<float>& sh_rest, size_t rows, size_t dim,
                            const std::vector<double>& importance, size_t k, int iters,
                            size_t batch, uint64_t seed, uint32_t r) {
  ShCodebook cb;
  cb.dim = uint32_t(dim);
  if (dim == 0 || rows == 0) {
    cb.assignments.assign(rows, 0);
    cb.k = 0;
    cb.r = 0;
    return cb;
  }
  KmeansResult km = kmeans_batched(sh_rest, rows, dim, std::min(k, rows), iters, batch, seed);
  cb.k = uint32_t(std::min(k, rows));
  cb.entries = km.centroids;
  cb.assignments = km.assignments;

  cb.r = std::min<uint32_t>(r, uint32_t(rows));
  std::vector<uint32_t> keep = retention_indices(importance, cb.r);
  cb.entries.resize(size_t(cb.k + cb.r) * dim);
  for (uint32_t slot = 0; slot < cb.r; ++slot) {
    uint32_t row = keep[slot];
    std::copy(&sh_rest[size_t(row) * dim], &sh_rest[size_t(row) * dim] + dim,
              &cb.entries[size_t(cb.k + slot) * dim]);
    cb.assignments[row] = cb.k + slot;
  }
  return cb;
}

inline std::vector<float> decode_sh(const ShCodebook& cb, size_t rows) {
  if (cb.assignments.size() != rows) throw ContainerError("SH assignment count mismatch");
  if (cb.dim == 0) return {};
  std::vector<float> out(rows * size_t(cb.dim));
  for (size_t i = 0; i < rows; ++i) {
    uint32_t a = cb.assignments[i];
    if (a >= cb.k + cb.r) throw ContainerError("SH assignment out of codebook range");
    std::copy(&cb.entries[size_t(a) * cb.dim], &cb.entries[size_t(a) * cb.dim] + cb.dim,
              &out[i * size_t(cb.dim)]);
  }
  return out;
}

}  // namespace mgs
