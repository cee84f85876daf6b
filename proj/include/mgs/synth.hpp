#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mgs/common.hpp"
#include "mgs/gs_model.hpp"
#include "mgs/splat.hpp"

namespace mgs {

struct SynthScene {
  GaussianCloud cloud;
  std::vector<Camera> cameras;
};

// Defaults give a scene where every stage of the codec has visible cost:
// moderate opacity keeps deep gaussians contributing (pruning hurts), and
// small-but-not-subpixel footprints keep the octree position error well
// under the splat size (a 16-bit encode stays near-lossless).
struct SynthParams {
  double cluster_half_box = 0.8;  // cluster centers land in +-this
  double cluster_sigma = 0.15;
  double log_scale_base = -4.8;
  double logit_base = -0.5;
  double logit_swing = 0.5;
  double camera_radius = 3.2;
  double focal = 220.0;
};

/// Clustered gaussians with smooth attribute fields, so channel streams have
/// the spatial redundancy the transform stage expects, plus a camera ring
/// that sees the whole cloud. Deterministic given the seed.
inline SynthScene synth_scene(size_t count, uint64_t seed, int sh_degree = 3,
                              int camera_count = 8, int width = 256, int height = 192,
                              const SynthParams& params = {}) {
  if (count == 0) throw std::invalid_argument("scene needs at least one gaussian");
  Rng rng(seed);
  SynthScene scene;
  GaussianCloud& c = scene.cloud;
  c.resize(count, sh_degree);
  size_t dim = size_t(c.rest_dim());

  size_t n_clusters = std::max<size_t>(1, std::min<size_t>(40, count / 8));
  std::vector<Vec3> centers(n_clusters);
  for (auto& ctr : centers)
    ctr = {(rng.next_double() * 2 - 1) * params.cluster_half_box,
           (rng.next_double() * 2 - 1) * params.cluster_half_box,
           (rng.next_double() * 2 - 1) * params.cluster_half_box};

  for (size_t i = 0; i < count; ++i) {
    const Vec3& ctr = centers[rng.next_below(n_clusters)];
    Vec3 p{ctr.x + rng.next_normal() * params.cluster_sigma,
           ctr.y + rng.next_normal() * params.cluster_sigma,
           ctr.z + rng.next_normal() * params.cluster_sigma};
    c.positions[i * 3 + 0] = float(p.x);
    c.positions[i * 3 + 1] = float(p.y);
    c.positions[i * 3 + 2] = float(p.z);

    // Smooth orientation field with a little noise.
    double ax = std::sin(2.1 * p.x) + 0.1 * rng.next_normal();
    double ay = std::cos(1.7 * p.y) + 0.1 * rng.next_normal();
    double az = std::sin(1.3 * p.z + 0.5) + 0.1 * rng.next_normal();
    double angle = 0.8 * std::sin(p.x + p.y) + 0.4 * std::cos(1.9 * p.z);
    double an = std::sqrt(ax * ax + ay * ay + az * az) + 1e-9;
    double s = std::sin(angle / 2) / an;
    c.quaternions[i * 4 + 0] = float(std::cos(angle / 2));
    c.quaternions[i * 4 + 1] = float(ax * s);
    c.quaternions[i * 4 + 2] = float(ay * s);
    c.quaternions[i * 4 + 3] = float(az * s);

    // Smoothly varying scales around exp(log_scale_base).
    for (int a = 0; a < 3; ++a)
      c.log_scales[i * 3 + a] =
          float(params.log_scale_base + 0.35 * std::sin(1.3 * p.x + 0.7 * a) +
                0.25 * std::cos(2.3 * p.y - a) + 0.05 * rng.next_normal());

    c.opacity_logits[i] = float(params.logit_base + params.logit_swing * std::sin(3.1 * p.z) +
                                0.3 * rng.next_normal());

    // Base color stays inside [0.1, 0.9] after DC evaluation.
    for (int a = 0; a < 3; ++a) {
      double tone = 0.5 * std::sin(2.0 * p.x + 2.1 * a) * std::cos(1.4 * p.y - 0.3 * a);
      c.sh_dc[i * 3 + a] = float((tone + 0.2 * rng.next_normal() * 0.2) / kShC0 * 0.4);
    }
    for (size_t a = 0; a < dim; ++a) {
      double falloff = 1.0 / (1.0 + 0.25 * double(a % 15));
      double v = 0.08 * falloff *
                 (std::sin(1.7 * p.x + 0.9 * double(a)) + std::cos(2.2 * p.y - 0.4 * double(a)));
      c.sh_rest[i * dim + a] = float(v + 0.01 * rng.next_normal());
    }
  }

  for (int k = 0; k < camera_count; ++k) {
    double phi = 2.0 * kPi * double(k) / double(camera_count);
    double elev = 0.35 + 0.25 * double(k % 2);
    double r = params.camera_radius;
    Vec3 eye{r * std::cos(phi) * std::cos(elev), r * std::sin(phi) * std::cos(elev),
             r * std::sin(elev)};
    scene.cameras.push_back(camera_look_at(eye, Vec3{0, 0, 0}, Vec3{0, 0, 1}, params.focal,
                                           params.focal, width, height));
  }
  return scene;
}

}  // namespace mgs
