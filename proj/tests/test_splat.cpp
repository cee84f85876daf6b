#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mgs/splat.hpp"
#include "mgs/synth.hpp"

using namespace mgs;

namespace {

Camera test_camera(int w = 64, int h = 48, double f = 60.0) {
  Camera cam;
  cam.world_to_camera = Mat4::identity();
  cam.fx = cam.fy = f;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

/// Scalar reference renderer: per pixel, loops over every splat in depth
/// order with the same dilation and cutoffs. No row decomposition, no
/// bounding boxes.
RenderResult reference_render(const GaussianCloud& cloud, const Camera& cam) {
  struct Ref {
    size_t index;
    Splat2D s;
    Vec3 rgb;
  };
  std::vector<Ref> splats;
  for (size_t i = 0; i < cloud.count; ++i) {
    auto s = project(activate(cloud, i), cam);
    if (s) splats.push_back({i, *s, dc_color(cloud, i)});
  }
  std::stable_sort(splats.begin(), splats.end(),
                   [](const Ref& a, const Ref& b) { return a.s.depth < b.s.depth; });

  RenderResult out;
  out.width = cam.width;
  out.height = cam.height;
  out.image.assign(size_t(cam.width) * cam.height * 3, 0.0);
  out.accum.assign(cloud.count, 0.0);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      double t = 1.0;
      double* px = &out.image[(size_t(y) * cam.width + x) * 3];
      for (const Ref& r : splats) {
        double a = r.s.cov2d[0] + kCovDilation, b = r.s.cov2d[1], c = r.s.cov2d[2] + kCovDilation;
        double det = a * c - b * b;
        // Mirror the production path's f32 rounding.
        float conic[3] = {float(c / det), float(-b / det), float(a / det)};
        float mxf = float(r.s.mean2d.x), myf = float(r.s.mean2d.y);
        double dx = x + 0.5 - double(mxf), dy = y + 0.5 - double(myf);
        double e = dx * dx * conic[0] + 2 * dx * dy * conic[1] + dy * dy * conic[2];
        if (e > kSigmaCutoffSq) continue;
        double alpha = double(float(r.s.opacity)) * std::exp(-0.5 * e);
        if (alpha < kAlphaCutoff) continue;
        double w = alpha * t;
        out.accum[r.index] += w;
        px[0] += w * float(r.rgb.x);
        px[1] += w * float(r.rgb.y);
        px[2] += w * float(r.rgb.z);
        t *= 1.0 - alpha;
      }
      for (int ch = 0; ch < 3; ++ch) px[ch] += t;
    }
  return out;
}

GaussianCloud single_gaussian(Vec3 pos, double log_scale, double logit, Vec3 dc) {
  GaussianCloud c;
  c.resize(1, 0);
  c.positions = {float(pos.x), float(pos.y), float(pos.z)};
  c.quaternions = {1, 0, 0, 0};
  c.log_scales = {float(log_scale), float(log_scale), float(log_scale)};
  c.opacity_logits = {float(logit)};
  c.sh_dc = {float(dc.x), float(dc.y), float(dc.z)};
  return c;
}

}  // namespace

TEST_CASE("on-axis isotropic gaussian projects to the principal point") {
  Camera cam = test_camera();
  ActivatedGaussian g;
  g.position = {0, 0, 5};
  g.rotation = {1, 0, 0, 0};
  g.scale = {1, 1, 1};
  g.opacity = 0.7;
  auto s = project(g, cam);
  REQUIRE(s.has_value());
  REQUIRE(s->mean2d.x == Catch::Approx(cam.cx));
  REQUIRE(s->mean2d.y == Catch::Approx(cam.cy));
  double expected = (cam.fx / 5.0) * (cam.fx / 5.0);
  REQUIRE(s->cov2d[0] == Catch::Approx(expected).epsilon(1e-12));
  REQUIRE(s->cov2d[2] == Catch::Approx(expected).epsilon(1e-12));
  REQUIRE(s->cov2d[1] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(s->depth == Catch::Approx(5.0));
}

TEST_CASE("projection matches numerical differentiation off axis") {
  Camera cam = test_camera();
  ActivatedGaussian g;
  g.position = {0.8, -0.5, 4.0};
  g.rotation = Quat{0.9, 0.1, -0.3, 0.2}.normalized();
  g.scale = {0.05, 0.2, 0.1};
  g.opacity = 0.5;
  auto s = project(g, cam);
  REQUIRE(s.has_value());

  // Finite-difference Jacobian of the projection around the mean, applied
  // to the world covariance.
  Mat3 r = quat_to_rotation(g.rotation);
  Mat3 cov;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      cov(i, j) = r(i, 0) * r(j, 0) * g.scale.x * g.scale.x +
                  r(i, 1) * r(j, 1) * g.scale.y * g.scale.y +
                  r(i, 2) * r(j, 2) * g.scale.z * g.scale.z;
  auto project_pt = [&](Vec3 p) {
    Vec3 t = cam.world_to_camera.transform_point(p);
    return Vec2{cam.fx * t.x / t.z, cam.fy * t.y / t.z};
  };
  double h = 1e-5;
  double jac[2][3];
  for (int a = 0; a < 3; ++a) {
    Vec3 dp = g.position;
    Vec3 dm = g.position;
    (&dp.x)[a] += h;
    (&dm.x)[a] -= h;
    Vec2 va = project_pt(dp), vb = project_pt(dm);
    jac[0][a] = (va.x - vb.x) / (2 * h);
    jac[1][a] = (va.y - vb.y) / (2 * h);
  }
  double expect[3] = {0, 0, 0};  // xx, xy, yy
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      expect[0] += jac[0][a] * cov(a, b) * jac[0][b];
      expect[1] += jac[0][a] * cov(a, b) * jac[1][b];
      expect[2] += jac[1][a] * cov(a, b) * jac[1][b];
    }
  REQUIRE(s->cov2d[0] == Catch::Approx(expect[0]).epsilon(1e-4));
  REQUIRE(s->cov2d[1] == Catch::Approx(expect[1]).epsilon(1e-4).margin(1e-6));
  REQUIRE(s->cov2d[2] == Catch::Approx(expect[2]).epsilon(1e-4));
}

TEST_CASE("gaussians behind the camera are culled") {
  Camera cam = test_camera();
  ActivatedGaussian g;
  g.position = {0, 0, -3};
  g.scale = {1, 1, 1};
  REQUIRE_FALSE(project(g, cam).has_value());
  g.position = {0, 0, 0.005};  // in front but inside the near clip
  REQUIRE_FALSE(project(g, cam).has_value());
}

TEST_CASE("rotating an isotropic gaussian leaves cov2d unchanged") {
  Camera cam = test_camera();
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    ActivatedGaussian g;
    g.position = {0.3, 0.2, 3.0};
    g.scale = {0.4, 0.4, 0.4};
    g.rotation =
        Quat{rng.next_normal(), rng.next_normal(), rng.next_normal(), rng.next_normal()}
            .normalized();
    auto s = project(g, cam);
    REQUIRE(s.has_value());
    ActivatedGaussian id = g;
    id.rotation = {1, 0, 0, 0};
    auto s0 = project(id, cam);
    REQUIRE(s->cov2d[0] == Catch::Approx(s0->cov2d[0]).margin(1e-10));
    REQUIRE(s->cov2d[1] == Catch::Approx(s0->cov2d[1]).margin(1e-10));
    REQUIRE(s->cov2d[2] == Catch::Approx(s0->cov2d[2]).margin(1e-10));
  }
}

TEST_CASE("culled-everything cloud renders pure white") {
  GaussianCloud c;
  c.resize(1, 0);
  c.positions = {0, 0, -5};  // behind the camera
  Camera cam = test_camera(8, 8);
  auto r = render(c, cam);
  for (double v : r.image) REQUIRE(v == 1.0);
  REQUIRE(r.accum[0] == 0.0);
}

TEST_CASE("single opaque centered gaussian: center pixel equals its DC color") {
  Camera cam = test_camera(65, 49);
  cam.cx = 32.5;  // a pixel center
  cam.cy = 24.5;
  GaussianCloud c = single_gaussian({0, 0, 2}, std::log(0.05), 30.0, {0.3, -0.2, 0.8});
  auto r = render(c, cam);
  Vec3 rgb = dc_color(c, 0);
  size_t px = (24 * 65 + 32) * 3;
  REQUIRE(r.image[px + 0] == Catch::Approx(rgb.x).margin(1e-6));
  REQUIRE(r.image[px + 1] == Catch::Approx(rgb.y).margin(1e-6));
  REQUIRE(r.image[px + 2] == Catch::Approx(rgb.z).margin(1e-6));

  auto ref = reference_render(c, cam);
  REQUIRE(r.accum[0] == Catch::Approx(ref.accum[0]).epsilon(1e-12));
}

TEST_CASE("production renderer matches the scalar reference on a synthetic scene") {
  SynthScene scene = synth_scene(300, 77, 0, 1, 48, 36);
  const Camera& cam = scene.cameras[0];
  auto fast = render(scene.cloud, cam);
  auto ref = reference_render(scene.cloud, cam);
  for (size_t i = 0; i < fast.image.size(); ++i)
    REQUIRE(fast.image[i] == Catch::Approx(ref.image[i]).margin(1e-9));
  for (size_t i = 0; i < fast.accum.size(); ++i)
    REQUIRE(fast.accum[i] == Catch::Approx(ref.accum[i]).margin(1e-9));
}

TEST_CASE("render is deterministic across thread counts") {
  SynthScene scene = synth_scene(500, 5, 0, 1, 64, 48);
  unsigned saved = thread_count();
  set_thread_count(1);
  auto a = render(scene.cloud, scene.cameras[0]);
  set_thread_count(7);
  auto b = render(scene.cloud, scene.cameras[0]);
  set_thread_count(saved);
  REQUIRE(a.image == b.image);
  REQUIRE(a.accum == b.accum);
}

TEST_CASE("two co-located alpha=0.5 gaussians: accums are 0.5|P| and 0.25|P|") {
  // A footprint much larger than the image makes alpha ~ 0.5 at every pixel,
  // so the front gaussian accumulates 0.5 per pixel and the occluded one
  // (1 - 0.5) * 0.5 = 0.25.
  Camera cam = test_camera(33, 33);
  cam.cx = 16.5;
  cam.cy = 16.5;
  GaussianCloud c;
  c.resize(2, 0);
  for (size_t i = 0; i < 2; ++i) {
    c.positions[i * 3 + 2] = float(2.0 + 1e-5 * double(i));  // distinct depths
    c.quaternions[i * 4] = 1.f;
    for (int a = 0; a < 3; ++a) c.log_scales[i * 3 + a] = float(std::log(20.0));
    c.opacity_logits[i] = 0.f;  // alpha = 0.5
  }
  auto r = render(c, cam);
  auto ref = reference_render(c, cam);
  REQUIRE(r.accum[0] == Catch::Approx(ref.accum[0]).margin(1e-9));
  REQUIRE(r.accum[1] == Catch::Approx(ref.accum[1]).margin(1e-9));
  double pixels = 33.0 * 33.0;
  REQUIRE(r.accum[0] == Catch::Approx(0.5 * pixels).epsilon(1e-3));
  REQUIRE(r.accum[1] == Catch::Approx(0.25 * pixels).epsilon(1e-3));
}

TEST_CASE("transmittance-weighted alphas never exceed 1 per pixel") {
  SynthScene scene = synth_scene(400, 9, 0, 1, 32, 24);
  auto r = render(scene.cloud, scene.cameras[0]);
  // Sum over gaussians of accum = sum over pixels of (1 - final T) <= pixel count.
  double total = 0;
  for (double a : r.accum) total += a;
  REQUIRE(total <= double(32 * 24) + 1e-9);
}

TEST_CASE("occluded gaussian scores ~0 view-dependent importance") {
  Camera cam = test_camera(33, 33);
  GaussianCloud c;
  c.resize(3, 0);
  // Two huge near-opaque occluders stacked in front of a small gaussian:
  // their footprints are flat across the occludee, so the transmittance
  // product collapses behind them.
  c.positions = {0, 0, 2, 0, 0, 2.001f, 0, 0, 3};
  c.quaternions = {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    c.log_scales[a] = float(std::log(500.0));
    c.log_scales[3 + a] = float(std::log(500.0));
    c.log_scales[6 + a] = float(std::log(0.05));
  }
  c.opacity_logits = {30.f, 30.f, 2.f};
  auto scores = view_dependent_importance(c, {cam});
  REQUIRE(scores[0] > 1.0);
  REQUIRE(scores[2] < 1e-6);

  REQUIRE_THROWS_AS(view_dependent_importance(c, {}), std::invalid_argument);
}

TEST_CASE("duplicated camera list exactly doubles the scores") {
  SynthScene scene = synth_scene(200, 31, 0, 1, 32, 24);
  auto once = view_dependent_importance(scene.cloud, {scene.cameras[0]});
  auto twice = view_dependent_importance(scene.cloud, {scene.cameras[0], scene.cameras[0]});
  for (size_t i = 0; i < once.size(); ++i)
    REQUIRE(twice[i] == Catch::Approx(2.0 * once[i]).margin(1e-12));
}

TEST_CASE("view-independent importance follows the 90th percentile rule") {
  GaussianCloud c;
  c.resize(10, 0);
  // Volumes 1..10: the log-scales sum to log(volume).
  for (size_t i = 0; i < 10; ++i) c.log_scales[i * 3] = float(std::log(double(i + 1)));

  SECTION("beta = 0 gives all ones") {
    auto s = view_independent_importance(c, 0.0);
    for (double x : s) REQUIRE(x == 1.0);
  }
  SECTION("beta = 1: normalizer is 9, scores clamp(v/9, 0, 1)") {
    auto s = view_independent_importance(c, 1.0);
    for (size_t i = 0; i < 10; ++i)
      REQUIRE(s[i] == Catch::Approx(std::min(1.0, double(i + 1) / 9.0)).epsilon(1e-6));
    REQUIRE(s[8] == Catch::Approx(1.0));  // the 90th-percentile gaussian itself
  }
  SECTION("scale-free: multiplying all volumes leaves scores unchanged") {
    auto base = view_independent_importance(c, 0.7);
    GaussianCloud scaled = c;
    for (auto& v : scaled.log_scales) v += 2.3f;
    auto s = view_independent_importance(scaled, 0.7);
    for (size_t i = 0; i < 10; ++i) REQUIRE(s[i] == Catch::Approx(base[i]).epsilon(1e-6));
  }
}

TEST_CASE("prune keeps exactly ceil(tau N) top scorers in original order") {
  GaussianCloud c;
  c.resize(4, 0);
  for (size_t i = 0; i < 4; ++i) c.opacity_logits[i] = float(i);

  SECTION("tau = 1 is the identity") {
    auto r = prune(c, {4, 3, 2, 1}, 1.0);
    REQUIRE(r.cloud.count == 4);
    REQUIRE(r.kept == std::vector<uint32_t>{0, 1, 2, 3});
  }
  SECTION("tau = 0.5 keeps the top half") {
    auto r = prune(c, {4, 3, 2, 1}, 0.5);
    REQUIRE(r.kept == std::vector<uint32_t>{0, 1});
    REQUIRE(r.cloud.opacity_logits == std::vector<float>{0.f, 1.f});
  }
  SECTION("ties break toward the lower index") {
    auto r = prune(c, {1, 1, 1, 1}, 0.5);
    REQUIRE(r.kept == std::vector<uint32_t>{0, 1});
  }
  SECTION("tau outside [0,1] is rejected") {
    REQUIRE_THROWS_AS(prune(c, {1, 2, 3, 4}, 1.5), std::invalid_argument);
  }
}

TEST_CASE("prune agrees with a sort-and-slice oracle and is idempotent") {
  Rng rng(55);
  GaussianCloud c;
  c.resize(200, 0);
  std::vector<double> scores(200);
  for (auto& s : scores) s = rng.next_double();

  auto r = prune(c, scores, 0.4);
  REQUIRE(r.cloud.count == size_t(std::ceil(0.4 * 200)));

  std::vector<uint32_t> order(200);
  for (uint32_t i = 0; i < 200; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  order.resize(r.cloud.count);
  std::sort(order.begin(), order.end());
  REQUIRE(r.kept == order);

  std::vector<double> survivor_scores;
  for (uint32_t i : r.kept) survivor_scores.push_back(scores[i]);
  auto again = prune(r.cloud, survivor_scores, 1.0);
  REQUIRE(again.cloud.count == r.cloud.count);
}

TEST_CASE("importance CDF endpoints, single-mass case, and prefix-sum oracle") {
  SECTION("uniform scores lie on the diagonal") {
    auto curve = importance_cdf({1, 1, 1, 1});
    for (auto [x, y] : curve) REQUIRE(y == Catch::Approx(x).margin(1e-9));
  }
  SECTION("single mass reaches y=0 at x=75") {
    auto curve = importance_cdf({0, 0, 0, 1});
    REQUIRE(curve[3].first == Catch::Approx(75.0));
    REQUIRE(curve[3].second == Catch::Approx(0.0));
    REQUIRE(curve[4].second == Catch::Approx(100.0));
  }
  SECTION("exponential scores: convex, matches prefix sums") {
    std::vector<double> scores;
    for (int i = 0; i < 32; ++i) scores.push_back(std::pow(1.5, i));
    auto curve = importance_cdf(scores);
    REQUIRE(curve.front().first == 0.0);
    REQUIRE(curve.back().second == Catch::Approx(100.0));
    std::sort(scores.begin(), scores.end());
    double total = 0;
    for (double s : scores) total += s;
    double prefix = 0;
    for (size_t k = 0; k < scores.size(); ++k) {
      prefix += scores[k];
      REQUIRE(curve[k + 1].second == Catch::Approx(100.0 * prefix / total).margin(1e-9));
      if (k > 1) {
        double d1 = curve[k].second - curve[k - 1].second;
        double d2 = curve[k + 1].second - curve[k].second;
        REQUIRE(d2 >= d1 - 1e-9);
      }
    }
  }
  SECTION("all-zero scores are rejected") {
    REQUIRE_THROWS_AS(importance_cdf({0, 0, 0}), std::invalid_argument);
  }
}

TEST_CASE("accum is invariant under depth-preserving permutations") {
  SynthScene scene = synth_scene(150, 8, 0, 1, 40, 30);
  auto base = render(scene.cloud, scene.cameras[0]);

  // Reverse the gaussian order (depths already distinct with probability 1).
  GaussianCloud rev;
  rev.resize(scene.cloud.count, 0);
  size_t n = scene.cloud.count;
  for (size_t i = 0; i < n; ++i) {
    size_t j = n - 1 - i;
    for (int a = 0; a < 3; ++a) {
      rev.positions[i * 3 + a] = scene.cloud.positions[j * 3 + a];
      rev.log_scales[i * 3 + a] = scene.cloud.log_scales[j * 3 + a];
      rev.sh_dc[i * 3 + a] = scene.cloud.sh_dc[j * 3 + a];
    }
    for (int a = 0; a < 4; ++a) rev.quaternions[i * 4 + a] = scene.cloud.quaternions[j * 4 + a];
    rev.opacity_logits[i] = scene.cloud.opacity_logits[j];
  }
  auto permuted = render(rev, scene.cameras[0]);
  for (size_t i = 0; i < n; ++i)
    REQUIRE(permuted.accum[i] == Catch::Approx(base.accum[n - 1 - i]).margin(1e-12));
  for (size_t i = 0; i < base.image.size(); ++i)
    REQUIRE(permuted.image[i] == Catch::Approx(base.image[i]).margin(1e-12));
}

TEST_CASE("rendering an isotropic gaussian is quaternion-invariant") {
  Camera cam = test_camera(32, 32);
  GaussianCloud a = single_gaussian({0.1, -0.05, 2.5}, std::log(0.08), 1.0, {0.4, 0.1, -0.2});
  GaussianCloud b = a;
  b.quaternions = {0.3f, -0.5f, 0.7f, 0.2f};
  auto ra = render(a, cam);
  auto rb = render(b, cam);
  for (size_t i = 0; i < ra.image.size(); ++i)
    REQUIRE(ra.image[i] == Catch::Approx(rb.image[i]).margin(1e-12));
}
