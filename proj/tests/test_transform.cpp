#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mgs/transform.hpp"

using namespace mgs;

namespace {

Quat random_unit_quat(Rng& rng) {
  Quat q{rng.next_normal(), rng.next_normal(), rng.next_normal(), rng.next_normal()};
  return q.normalized();
}

/// Quaternion for a rotation of `angle` about a unit axis.
Quat axis_angle(double ax, double ay, double az, double angle) {
  double n = std::sqrt(ax * ax + ay * ay + az * az);
  double s = std::sin(angle / 2) / n;
  return Quat{std::cos(angle / 2), ax * s, ay * s, az * s};
}

RahtPlan plan_for_keys(std::vector<uint64_t> keys, int depth) { return RahtPlan(keys, depth); }

}  // namespace

TEST_CASE("identity quaternion maps to zero Euler angles and identity matrix") {
  EulerAngles e = quat_to_euler({1, 0, 0, 0});
  REQUIRE(e.phi == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(e.theta == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(e.psi == Catch::Approx(0.0).margin(1e-15));
  Mat3 r = euler_to_rotation(e);
  REQUIRE(r.frobenius_distance(Mat3::identity()) < 1e-12);
}

TEST_CASE("90-degree z rotation: quat (sqrt2/2,0,0,sqrt2/2) <-> euler (0,0,pi/2)") {
  double h = std::sqrt(2.0) / 2.0;
  EulerAngles e = quat_to_euler({h, 0, 0, h});
  REQUIRE(e.phi == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(e.theta == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(e.psi == Catch::Approx(kPi / 2).margin(1e-12));

  Mat3 from_euler = euler_to_rotation(e);
  Mat3 from_quat = quat_to_rotation({h, 0, 0, h});
  REQUIRE(from_euler.frobenius_distance(from_quat) < 1e-12);
}

TEST_CASE("euler rotation matrices are orthonormal with determinant +1") {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    EulerAngles e{(rng.next_double() * 2 - 1) * kPi, (rng.next_double() - 0.5) * kPi,
                  (rng.next_double() * 2 - 1) * kPi};
    Mat3 r = euler_to_rotation(e);
    REQUIRE(r.det() == Catch::Approx(1.0).margin(1e-12));
    Mat3 rtr = r.transposed() * r;
    REQUIRE(rtr.frobenius_distance(Mat3::identity()) < 1e-12);
  }
}

TEST_CASE("euler round-trip reproduces the rotation matrix of any unit quaternion") {
  Rng rng(12);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    Quat q = random_unit_quat(rng);
    Mat3 direct = quat_to_rotation(q);
    Mat3 via = euler_to_rotation(quat_to_euler(q));
    worst = std::max(worst, direct.frobenius_distance(via));
  }
  REQUIRE(worst <= 1e-6);
}

TEST_CASE("near-gimbal quaternions stay within tolerance") {
  Rng rng(13);
  double worst = 0;
  for (int i = 0; i < 2000; ++i) {
    // |theta| approaches the pole down to a distance of 1e-4.
    double dist = 1e-4 + 0.2 * rng.next_double();
    double theta = (kPi / 2 - dist) * (rng.next_below(2) ? 1 : -1);
    double phi = (rng.next_double() * 2 - 1) * kPi;
    double psi = (rng.next_double() * 2 - 1) * kPi;
    Quat qz = axis_angle(0, 0, 1, psi);
    Quat qy = axis_angle(0, 1, 0, theta);
    Quat qx = axis_angle(1, 0, 0, phi);
    // Compose Rz * Ry * Rx as quaternion product qz*qy*qx.
    auto mul = [](const Quat& a, const Quat& b) {
      return Quat{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
                  a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
                  a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
                  a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
    };
    Quat q = mul(mul(qz, qy), qx).normalized();
    Mat3 direct = quat_to_rotation(q);
    Mat3 via = euler_to_rotation(quat_to_euler(q));
    worst = std::max(worst, direct.frobenius_distance(via));
  }
  REQUIRE(worst <= 1e-6);
}

TEST_CASE("exact gimbal point uses the fixed convention with finite angles") {
  // theta = +pi/2 exactly: q = qz(psi) * qy(pi/2).
  Quat qy = axis_angle(0, 1, 0, kPi / 2);
  Quat qz = axis_angle(0, 0, 1, 0.7);
  Quat q{qz.w * qy.w - qz.x * qy.x - qz.y * qy.y - qz.z * qy.z,
         qz.w * qy.x + qz.x * qy.w + qz.y * qy.z - qz.z * qy.y,
         qz.w * qy.y - qz.x * qy.z + qz.y * qy.w + qz.z * qy.x,
         qz.w * qy.z + qz.x * qy.y - qz.y * qy.x + qz.z * qy.w};
  EulerAngles e = quat_to_euler(q);
  REQUIRE(e.theta == Catch::Approx(kPi / 2));
  REQUIRE(e.phi == 0.0);
  REQUIRE(std::isfinite(e.psi));
  REQUIRE(euler_to_rotation(e).frobenius_distance(quat_to_rotation(q)) < 1e-6);
}

TEST_CASE("rotation_to_quat inverts quat_to_rotation up to sign") {
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    Quat q = random_unit_quat(rng);
    Quat back = rotation_to_quat(quat_to_rotation(q));
    Mat3 a = quat_to_rotation(q), b = quat_to_rotation(back);
    REQUIRE(a.frobenius_distance(b) < 1e-9);
    REQUIRE(back.w >= 0.0);
  }
}

TEST_CASE("RAHT of two equal-valued siblings: DC = sqrt(2)*v, AC = 0") {
  // Keys 0 and 1 differ in the x bit and pair at the first sub-step.
  RahtPlan plan = plan_for_keys({0, 1}, 1);
  std::vector<double> values = {3.5, 3.5};
  RahtChannel out = raht_forward(values, plan);
  REQUIRE(out.ac.size() == 1);
  REQUIRE(out.dc == Catch::Approx(std::sqrt(2.0) * 3.5));
  REQUIRE(out.ac[0] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("three-node layout reproduces the hand-derived DC/AC values") {
  // Leaves 2 and 3 pair along x; leaf 0 passes through and then pairs along
  // y with their DC, which carries weight 2.
  double a0 = 1.25, a1 = -0.5, a2 = 2.0;
  RahtPlan plan = plan_for_keys({0, 2, 3}, 1);
  RahtChannel out = raht_forward(std::vector<double>{a0, a1, a2}, plan);

  double d1 = (a1 + a2) / std::sqrt(2.0);
  double c1 = (a2 - a1) / std::sqrt(2.0);
  double d2 = (a0 + std::sqrt(2.0) * d1) / std::sqrt(3.0);
  double c2 = (-std::sqrt(2.0) * a0 + d1) / std::sqrt(3.0);

  REQUIRE(out.ac.size() == 2);
  REQUIRE(out.ac[0] == Catch::Approx(c1));
  REQUIRE(out.ac[1] == Catch::Approx(c2));
  REQUIRE(out.dc == Catch::Approx(d2));
}

TEST_CASE("RAHT round-trips and conserves energy on random octrees") {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    int depth = 1 + int(rng.next_below(6));
    size_t n = 1 + rng.next_below(300);
    std::vector<uint64_t> keys(n);
    for (auto& k : keys) k = rng.next_below(uint64_t(1) << (3 * depth));
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    RahtPlan plan(keys, depth);
    std::vector<double> values(keys.size());
    for (auto& v : values) v = rng.next_normal();

    RahtChannel coeffs = raht_forward(values, plan);
    REQUIRE(coeffs.ac.size() == keys.size() - 1);

    double in_energy = 0, out_energy = coeffs.dc * coeffs.dc;
    for (double v : values) in_energy += v * v;
    for (double v : coeffs.ac) out_energy += v * v;
    REQUIRE(out_energy == Catch::Approx(in_energy).epsilon(1e-9));

    std::vector<double> back = raht_inverse(coeffs, plan);
    REQUIRE(back.size() == values.size());
    for (size_t i = 0; i < values.size(); ++i)
      REQUIRE(back[i] == Catch::Approx(values[i]).margin(1e-9));
  }
}

TEST_CASE("RAHT is linear") {
  Rng rng(16);
  std::vector<uint64_t> keys;
  for (int i = 0; i < 60; ++i) keys.push_back(rng.next_below(1 << 9));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  RahtPlan plan(keys, 3);

  size_t m = keys.size();
  std::vector<double> u(m), v(m), mix(m);
  for (size_t i = 0; i < m; ++i) {
    u[i] = rng.next_normal();
    v[i] = rng.next_normal();
    mix[i] = 2.5 * u[i] - 0.75 * v[i];
  }
  auto fu = raht_forward(u, plan), fv = raht_forward(v, plan), fm = raht_forward(mix, plan);
  REQUIRE(fm.dc == Catch::Approx(2.5 * fu.dc - 0.75 * fv.dc).margin(1e-9));
  for (size_t i = 0; i < fm.ac.size(); ++i)
    REQUIRE(fm.ac[i] == Catch::Approx(2.5 * fu.ac[i] - 0.75 * fv.ac[i]).margin(1e-9));
}

TEST_CASE("constant channel: all AC exactly zero, DC = sqrt(M)*value") {
  Rng rng(17);
  std::vector<uint64_t> keys;
  for (int i = 0; i < 100; ++i) keys.push_back(rng.next_below(1 << 12));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  RahtPlan plan(keys, 4);

  std::vector<double> values(keys.size(), 7.0);
  RahtChannel out = raht_forward(values, plan);
  // Zero up to rounding of the intermediate weighted DC products.
  for (double a : out.ac) REQUIRE(a == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(out.dc == Catch::Approx(std::sqrt(double(keys.size())) * 7.0).epsilon(1e-12));
}

TEST_CASE("AC ordering depends only on the octree") {
  Rng rng(18);
  std::vector<uint64_t> keys;
  for (int i = 0; i < 40; ++i) keys.push_back(rng.next_below(1 << 6));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  RahtPlan plan(keys, 2);

  // Two delta signals: the nonzero AC positions must cover the same index
  // structure (a pure function of the tree), so a round-trip through
  // different values keeps every coefficient in a stable slot.
  std::vector<double> x(keys.size(), 0.0), y(keys.size(), 0.0);
  x[0] = 1.0;
  y[keys.size() - 1] = 1.0;
  auto fx = raht_forward(x, plan);
  auto fy = raht_forward(y, plan);
  REQUIRE(fx.ac.size() == fy.ac.size());
  auto bx = raht_inverse(fx, plan);
  auto by = raht_inverse(fy, plan);
  for (size_t i = 0; i < x.size(); ++i) {
    REQUIRE(bx[i] == Catch::Approx(x[i]).margin(1e-12));
    REQUIRE(by[i] == Catch::Approx(y[i]).margin(1e-12));
  }
}

TEST_CASE("length mismatches are rejected") {
  RahtPlan plan(std::vector<uint64_t>{0, 1, 2}, 1);
  REQUIRE_THROWS_AS(raht_forward(std::vector<double>{1.0, 2.0}, plan), std::invalid_argument);
  RahtChannel c;
  c.dc = 1;
  c.ac = {0.0};  // should be 2
  REQUIRE_THROWS_AS(raht_inverse(c, plan), std::invalid_argument);
}

TEST_CASE("assemble/disassemble honor the transform plan") {
  // Constant channels under an all-RAHT plan produce all-zero AC streams.
  GaussianCloud cloud;
  cloud.resize(4, 0);
  for (size_t i = 0; i < 4; ++i) {
    cloud.quaternions[i * 4] = 1.f;  // identity rotations
    cloud.opacity_logits[i] = 0.5f;
    for (int a = 0; a < 3; ++a) {
      cloud.log_scales[i * 3 + a] = -2.f;
      cloud.sh_dc[i * 3 + a] = 0.25f;
    }
  }
  RahtPlan plan(std::vector<uint64_t>{0, 1, 6, 7}, 1);
  auto streams = assemble_channels(cloud, plan, TransformPlan::all_raht());
  REQUIRE(streams.size() == kChannelCount);
  for (const auto& s : streams) {
    REQUIRE(s.transformed);
    for (double v : s.values) REQUIRE(v == Catch::Approx(0.0).margin(1e-12));
  }

  // Scale channels flagged raw pass through unchanged.
  std::array<int, kChannelCount> widths{};
  widths.fill(16);
  widths[kLogScale0] = widths[kLogScale1] = widths[kLogScale2] = 8;
  TransformPlan p = TransformPlan::for_bit_widths(widths);
  REQUIRE_FALSE(p.raht[kLogScale0]);
  REQUIRE(p.raht[kOpacity]);
  auto streams2 = assemble_channels(cloud, plan, p);
  for (int a = 0; a < 3; ++a) {
    REQUIRE_FALSE(streams2[kLogScale0 + a].transformed);
    REQUIRE(streams2[kLogScale0 + a].values.size() == 4);
    for (double v : streams2[kLogScale0 + a].values) REQUIRE(v == Catch::Approx(-2.0));
  }

  // Round-trip through disassemble restores the fields.
  GaussianCloud out;
  out.resize(4, 0);
  disassemble_channels(streams2, plan, out);
  for (size_t i = 0; i < 4; ++i) {
    REQUIRE(out.opacity_logits[i] == Catch::Approx(0.5).margin(1e-6));
    REQUIRE(out.log_scales[i * 3] == Catch::Approx(-2.0).margin(1e-6));
    // Identity rotation survives the euler replacement.
    REQUIRE(std::abs(out.quaternions[i * 4 + 0]) == Catch::Approx(1.0).margin(1e-6));
  }
}
