#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "mgs/common.hpp"
#include "mgs/gs_model.hpp"
#include "mgs/transform.hpp"

namespace mgs {

// Degree-0 SH evaluation constant.
inline constexpr double kShC0 = 0.28209479177387814;

struct Camera {
  Mat4 world_to_camera;          // row-major viewing transform
  double fx = 0, fy = 0;         // focal lengths in pixels
  double cx = 0, cy = 0;         // principal point in pixels
  int width = 0, height = 0;
  double near_clip = 0.01;

  void validate() const {
    if (width < 1 || height < 1) throw ParseError("camera image size must be >= 1");
    if (!(near_clip > 0)) throw ParseError("camera near_clip must be > 0");
    Mat3 r = world_to_camera.rotation();
    Mat3 rtr = r.transposed() * r;
    if (rtr.frobenius_distance(Mat3::identity()) > 1e-6)
      throw ParseError("camera rotation block is not orthonormal");
  }
};

/// Right-handed look-at camera: +z forward, rows of W are the camera axes.
inline Camera camera_look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint, double fx,
                             double fy, int width, int height) {
  auto cross = [](const Vec3& a, const Vec3& b) {
    return Vec3{a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
  };
  Vec3 z = target - eye;
  double n = z.norm();
  if (n < 1e-12) throw std::invalid_argument("look-at eye equals target");
  z = z * (1.0 / n);
  Vec3 x = cross(up_hint, z);
  if (x.norm() < 1e-9) x = cross(Vec3{1, 0, 0}, z);
  x = x * (1.0 / x.norm());
  Vec3 y = cross(z, x);

  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  Mat4& w = cam.world_to_camera;
  w = Mat4::identity();
  const Vec3 axes[3] = {x, y, z};
  for (int r = 0; r < 3; ++r) {
    w(r, 0) = axes[r].x;
    w(r, 1) = axes[r].y;
    w(r, 2) = axes[r].z;
    w(r, 3) = -(axes[r].dot(eye));
  }
  return cam;
}

struct Splat2D {
  Vec2 mean2d;      // pixels
  double cov2d[3];  // (xx, xy, yy), pre-dilation
  double depth = 0;
  double opacity = 0;
};

/// Perspective projection of one activated gaussian. Returns nullopt when
/// the camera-space depth is at or behind the near plane.
inline std::optional<Splat2D> project(const ActivatedGaussian& g, const Camera& cam) {
  Vec3 t = cam.world_to_camera.transform_point(g.position);
  if (t.z <= cam.near_clip) return std::nullopt;

  // World covariance R S S^T R^T.
  Mat3 r = quat_to_rotation(g.rotation);
  Mat3 cov;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      cov(i, j) = r(i, 0) * r(j, 0) * g.scale.x * g.scale.x +
                  r(i, 1) * r(j, 1) * g.scale.y * g.scale.y +
                  r(i, 2) * r(j, 2) * g.scale.z * g.scale.z;

  Mat3 w = cam.world_to_camera.rotation();
  Mat3 cam_cov = w * cov * w.transposed();

  // 2x3 Jacobian of the perspective map at the camera-space mean.
  double inv_z = 1.0 / t.z;
  double j00 = cam.fx * inv_z, j02 = -cam.fx * t.x * inv_z * inv_z;
  double j11 = cam.fy * inv_z, j12 = -cam.fy * t.y * inv_z * inv_z;

  // J * cam_cov * J^T, expanded.
  double r0[3] = {j00 * cam_cov(0, 0) + j02 * cam_cov(2, 0),
                  j00 * cam_cov(0, 1) + j02 * cam_cov(2, 1),
                  j00 * cam_cov(0, 2) + j02 * cam_cov(2, 2)};
  double r1[3] = {j11 * cam_cov(1, 0) + j12 * cam_cov(2, 0),
                  j11 * cam_cov(1, 1) + j12 * cam_cov(2, 1),
                  j11 * cam_cov(1, 2) + j12 * cam_cov(2, 2)};

  Splat2D s;
  s.cov2d[0] = r0[0] * j00 + r0[2] * j02;
  s.cov2d[1] = r1[0] * j00 + r1[2] * j02;
  s.cov2d[2] = r1[1] * j11 + r1[2] * j12;
  s.mean2d = {cam.fx * t.x * inv_z + cam.cx, cam.fy * t.y * inv_z + cam.cy};
  s.depth = t.z;
  s.opacity = g.opacity;
  return s;
}

inline Vec3 dc_color(const GaussianCloud& cloud, size_t i) {
  auto ch = [&](int a) { return std::max(0.0, 0.5 + kShC0 * double(cloud.sh_dc[i * 3 + a])); };
  return {ch(0), ch(1), ch(2)};
}

struct RenderResult {
  int width = 0, height = 0;
  std::vector<double> image;  // height x width x 3, white background
  std::vector<double> accum;  // per gaussian: sum over pixels of alpha * transmittance
};

// Dilation added to the 2D covariance diagonal before inversion, and the
// footprint/alpha cutoffs.
inline constexpr double kCovDilation = 0.3;
inline constexpr double kSigmaCutoffSq = 9.0;  // 3-sigma ellipse
inline constexpr double kAlphaCutoff = 1.0 / 255.0;

inline RenderResult render(const GaussianCloud& cloud, const Camera& cam) {
  cam.validate();
  size_t n = cloud.count;
  RenderResult out;
  out.width = cam.width;
  out.height = cam.height;
  out.accum.assign(n, 0.0);

  struct Prepared {
    uint32_t index;
    float depth;
    float mx, my;
    float conic[3];  // inverse of dilated cov2d
    float alpha0;    // opacity
    float rgb[3];
    int x0, x1, y0, y1;
  };
  std::vector<Prepared> splats;
  splats.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    auto s = project(activate(cloud, i), cam);
    if (!s) continue;
    double a = s->cov2d[0] + kCovDilation, b = s->cov2d[1], c = s->cov2d[2] + kCovDilation;
    double det = a * c - b * b;
    if (!(det > 0)) continue;  // defensive; dilation makes this impossible for finite input
    double mid = 0.5 * (a + c);
    double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    double radius = 3.0 * std::sqrt(lambda_max);

    Prepared p;
    p.index = uint32_t(i);
    p.depth = float(s->depth);
    p.mx = float(s->mean2d.x);
    p.my = float(s->mean2d.y);
    p.conic[0] = float(c / det);
    p.conic[1] = float(-b / det);
    p.conic[2] = float(a / det);
    p.alpha0 = float(s->opacity);
    Vec3 rgb = dc_color(cloud, i);
    p.rgb[0] = float(rgb.x);
    p.rgb[1] = float(rgb.y);
    p.rgb[2] = float(rgb.z);
    p.x0 = std::max(0, int(std::floor(s->mean2d.x - radius)));
    p.x1 = std::min(cam.width - 1, int(std::ceil(s->mean2d.x + radius)));
    p.y0 = std::max(0, int(std::floor(s->mean2d.y - radius)));
    p.y1 = std::min(cam.height - 1, int(std::ceil(s->mean2d.y + radius)));
    if (p.x0 > p.x1 || p.y0 > p.y1) continue;
    splats.push_back(p);
  }

  // Global front-to-back order; ties broken by original index.
  std::sort(splats.begin(), splats.end(), [](const Prepared& a, const Prepared& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });

  std::vector<std::vector<uint32_t>> row_splats(cam.height);
  for (uint32_t s = 0; s < splats.size(); ++s)
    for (int y = splats[s].y0; y <= splats[s].y1; ++y) row_splats[y].push_back(s);

  size_t w = size_t(cam.width);
  out.image.assign(size_t(cam.height) * w * 3, 0.0);
  // Per-row (gaussian, weight) contributions, merged in row order afterwards
  // so the reduction is independent of the thread schedule.
  std::vector<std::vector<std::pair<uint32_t, double>>> row_accum(cam.height);

  parallel_chunks(size_t(cam.height), 1, [&](size_t, size_t y_begin, size_t y_end) {
    for (size_t y = y_begin; y < y_end; ++y) {
      std::vector<double> trans(w, 1.0);
      double* row_img = &out.image[y * w * 3];
      double py = double(y) + 0.5;
      for (uint32_t sid : row_splats[y]) {
        const Prepared& p = splats[sid];
        double contrib = 0.0;
        for (int x = p.x0; x <= p.x1; ++x) {
          double dx = double(x) + 0.5 - double(p.mx);
          double dy = py - double(p.my);
          double e = dx * dx * p.conic[0] + 2.0 * dx * dy * p.conic[1] + dy * dy * p.conic[2];
          if (e > kSigmaCutoffSq) continue;
          double alpha = double(p.alpha0) * std::exp(-0.5 * e);
          if (alpha < kAlphaCutoff) continue;
          double t = trans[size_t(x)];
          double wgt = alpha * t;
          contrib += wgt;
          row_img[x * 3 + 0] += wgt * p.rgb[0];
          row_img[x * 3 + 1] += wgt * p.rgb[1];
          row_img[x * 3 + 2] += wgt * p.rgb[2];
          trans[size_t(x)] = t * (1.0 - alpha);
        }
        if (contrib != 0.0) row_accum[y].emplace_back(p.index, contrib);
      }
      // White background after the loop.
      for (size_t x = 0; x < w; ++x)
        for (int ch = 0; ch < 3; ++ch) row_img[x * 3 + ch] += trans[x];
    }
  });

  for (const auto& row : row_accum)
    for (auto [idx, wgt] : row) out.accum[idx] += wgt;
  return out;
}

/// Sum of per-camera accumulated blending weights (the view-dependent score).
inline std::vector<double> view_dependent_importance(const GaussianCloud& cloud,
                                                     const std::vector<Camera>& cameras) {
  if (cameras.empty()) throw std::invalid_argument("view-dependent importance needs >= 1 camera");
  std::vector<double> scores(cloud.count, 0.0);
  for (const Camera& cam : cameras) {
    RenderResult r = render(cloud, cam);
    for (size_t i = 0; i < cloud.count; ++i) scores[i] += r.accum[i];
  }
  return scores;
}

/// (V / quantile_0.9(V)) clipped to [0,1], raised to beta. V is the product
/// of the activated scale components; the normalizer is the ascending
/// nearest-rank 90th percentile.
inline std::vector<double> view_independent_importance(const GaussianCloud& cloud, double beta) {
  if (beta < 0) throw std::invalid_argument("beta must be >= 0");
  size_t n = cloud.count;
  std::vector<double> volume(n);
  for (size_t i = 0; i < n; ++i) {
    double s = double(cloud.log_scales[i * 3]) + double(cloud.log_scales[i * 3 + 1]) +
               double(cloud.log_scales[i * 3 + 2]);
    volume[i] = std::exp(s);
  }
  std::vector<double> sorted = volume;
  std::sort(sorted.begin(), sorted.end());
  size_t rank = size_t(std::ceil(0.9 * double(n)));
  double normalizer = sorted[rank == 0 ? 0 : rank - 1];
  std::vector<double> scores(n);
  for (size_t i = 0; i < n; ++i) {
    double v = normalizer > 0 ? std::clamp(volume[i] / normalizer, 0.0, 1.0) : 1.0;
    scores[i] = std::pow(v, beta);
  }
  return scores;
}

struct ImportanceScores {
  std::vector<double> view_dependent;    // I_d
  std::vector<double> view_independent;  // I_i
  std::vector<double> joint;             // I_g = I_d * I_i

  static ImportanceScores compute(const GaussianCloud& cloud, const std::vector<Camera>& cameras,
                                  double beta) {
    ImportanceScores s;
    // Without cameras I_d degenerates to ones and I_g = I_i.
    s.view_dependent = cameras.empty() ? std::vector<double>(cloud.count, 1.0)
                                       : view_dependent_importance(cloud, cameras);
    s.view_independent = view_independent_importance(cloud, beta);
    s.joint.resize(cloud.count);
    for (size_t i = 0; i < cloud.count; ++i)
      s.joint[i] = s.view_dependent[i] * s.view_independent[i];
    return s;
  }
};

struct PruneResult {
  GaussianCloud cloud;
  std::vector<uint32_t> kept;  // original indices, ascending
};

/// Keeps exactly ceil(tau*N) gaussians, the top scorers; equal scores break
/// toward the lower original index. Survivors keep their relative order.
inline PruneResult prune(const GaussianCloud& cloud, const std::vector<double>& scores,
                         double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in [0,1]");
  if (scores.size() != cloud.count) throw std::invalid_argument("score count mismatch");
  size_t n = cloud.count;
  size_t keep = size_t(std::ceil(tau * double(n)));

  std::vector<uint32_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = uint32_t(i);
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());

  PruneResult out;
  out.kept = order;
  out.cloud.resize(keep, cloud.sh_degree);
  size_t d = size_t(cloud.rest_dim());
  for (size_t k = 0; k < keep; ++k) {
    size_t i = order[k];
    for (int a = 0; a < 3; ++a) {
      out.cloud.positions[k * 3 + a] = cloud.positions[i * 3 + a];
      out.cloud.log_scales[k * 3 + a] = cloud.log_scales[i * 3 + a];
      out.cloud.sh_dc[k * 3 + a] = cloud.sh_dc[i * 3 + a];
    }
    for (int a = 0; a < 4; ++a) out.cloud.quaternions[k * 4 + a] = cloud.quaternions[i * 4 + a];
    out.cloud.opacity_logits[k] = cloud.opacity_logits[i];
    for (size_t a = 0; a < d; ++a) out.cloud.sh_rest[k * d + a] = cloud.sh_rest[i * d + a];
  }
  return out;
}

/// Quantile-quantile curve: x% least important gaussians hold y% of the
/// total importance. N+1 points from (0,0) to (100,100).
inline std::vector<std::pair<double, double>> importance_cdf(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("empty scores");
  double total = 0;
  for (double s : scores) {
    if (s < 0 || !std::isfinite(s)) throw std::invalid_argument("scores must be finite and >= 0");
    total += s;
  }
  if (total <= 0) throw std::invalid_argument("importance sum must be positive");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> curve;
  curve.reserve(sorted.size() + 1);
  curve.emplace_back(0.0, 0.0);
  double prefix = 0;
  for (size_t k = 0; k < sorted.size(); ++k) {
    prefix += sorted[k];
    curve.emplace_back(100.0 * double(k + 1) / double(sorted.size()), 100.0 * prefix / total);
  }
  return curve;
}

/// PSNR between two images clamped to [0,1]; +inf for identical inputs.
inline double image_psnr(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("image size mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double x = std::clamp(a[i], 0.0, 1.0) - std::clamp(b[i], 0.0, 1.0);
    mse += x * x;
  }
  mse /= double(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace mgs
