#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mgs/common.hpp"
#include "mgs/geometry.hpp"
#include "mgs/gs_model.hpp"

namespace mgs {

inline constexpr double kPi = 3.14159265358979323846;

struct EulerAngles {
  double phi = 0;    // about x
  double theta = 0;  // about y, in [-pi/2, pi/2]
  double psi = 0;    // about z
};

/// Standard rotation matrix of a unit quaternion (w,x,y,z).
inline Mat3 quat_to_rotation(const Quat& q_in) {
  Quat q = q_in.normalized();
  double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
         2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  return r;
}

/// Euler angles (phi, theta, psi) such that the orientation equals
/// Rz(psi)*Ry(theta)*Rx(phi). At the theta = +-pi/2 singularity the free
/// rotation folds entirely into psi and phi is fixed at 0.
inline EulerAngles quat_to_euler(const Quat& q_in) {
  Quat q = q_in.normalized();
  double w = q.w, x = q.x, y = q.y, z = q.z;
  if (!std::isfinite(w + x + y + z)) throw std::invalid_argument("non-finite quaternion");

  double s = 2.0 * (w * y - x * z);  // sin(theta)
  EulerAngles e;
  const double gimbal_eps = 1e-9;
  if (s >= 1.0 - gimbal_eps) {
    e.theta = kPi / 2;
    e.phi = 0.0;
    e.psi = std::atan2(2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + z * z));
  } else if (s <= -1.0 + gimbal_eps) {
    e.theta = -kPi / 2;
    e.phi = 0.0;
    e.psi = std::atan2(2.0 * (w * x - y * z), 1.0 - 2.0 * (x * x + z * z));
  } else {
    e.phi = std::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
    // Equivalent to asin(s) but stable at the interval ends.
    e.theta = -kPi / 2 + 2.0 * std::atan2(std::sqrt(1.0 + s), std::sqrt(1.0 - s));
    e.psi = std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
  }
  return e;
}

inline Mat3 euler_to_rotation(const EulerAngles& e) {
  double cf = std::cos(e.phi), sf = std::sin(e.phi);
  double ct = std::cos(e.theta), st = std::sin(e.theta);
  double cp = std::cos(e.psi), sp = std::sin(e.psi);
  Mat3 r;
  r.m = {ct * cp, -cf * sp + sf * st * cp, sf * sp + cf * st * cp,
         ct * sp, cf * cp + sf * st * sp,  -sf * cp + cf * st * sp,
         -st,     sf * ct,                 cf * ct};
  return r;
}

/// Shepperd's method; returns the representative with w >= 0.
inline Quat rotation_to_quat(const Mat3& r) {
  double t = r(0, 0) + r(1, 1) + r(2, 2);
  Quat q;
  if (t > 0) {
    double s = std::sqrt(t + 1.0) * 2;
    q.w = 0.25 * s;
    q.x = (r(2, 1) - r(1, 2)) / s;
    q.y = (r(0, 2) - r(2, 0)) / s;
    q.z = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2;
    q.w = (r(2, 1) - r(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (r(0, 1) + r(1, 0)) / s;
    q.z = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2;
    q.w = (r(0, 2) - r(2, 0)) / s;
    q.x = (r(0, 1) + r(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (r(1, 2) + r(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2;
    q.w = (r(1, 0) - r(0, 1)) / s;
    q.x = (r(0, 2) + r(2, 0)) / s;
    q.y = (r(1, 2) + r(2, 1)) / s;
    q.z = 0.25 * s;
  }
  q = q.normalized();
  if (q.w < 0) return {-q.w, -q.x, -q.y, -q.z};
  return q;
}

inline Quat euler_to_quat(const EulerAngles& e) { return rotation_to_quat(euler_to_rotation(e)); }

// ---------------------------------------------------------------------------
// Region adaptive hierarchical transform over the octree.
//
// The sweep runs bottom-up, one Morton bit per sub-step (x, then y, then z
// within each octree level). Two sibling nodes (a1, a2) with weights
// (w1, w2) map through the orthonormal pair transform
//   dc = ( sqrt(w1)*a1 + sqrt(w2)*a2) / sqrt(w1+w2)
//   ac = (-sqrt(w2)*a1 + sqrt(w1)*a2) / sqrt(w1+w2)
// and unpaired nodes pass through. AC coefficients are emitted sub-step
// major, ascending key within a sub-step, which the inverse reproduces from
// the octree alone.
// ---------------------------------------------------------------------------

/// Pairing structure of one bottom-up sweep; depends only on the tree, so it
/// is computed once and shared across channels and with the inverse.
class RahtPlan {
 public:
  RahtPlan(const std::vector<uint64_t>& leaf_keys, int depth) {
    size_t m = leaf_keys.size();
    steps_.resize(size_t(depth) * 3);
    std::vector<uint64_t> keys = leaf_keys;
    std::vector<double> weights(m, 1.0);
    for (auto& step : steps_) {
      std::vector<uint64_t> next_keys;
      std::vector<double> next_weights;
      next_keys.reserve(keys.size());
      next_weights.reserve(keys.size());
      size_t i = 0;
      while (i < keys.size()) {
        if (i + 1 < keys.size() && (keys[i] >> 1) == (keys[i + 1] >> 1)) {
          step.slots.push_back(true);
          step.pair_weights.emplace_back(weights[i], weights[i + 1]);
          next_keys.push_back(keys[i] >> 1);
          next_weights.push_back(weights[i] + weights[i + 1]);
          i += 2;
        } else {
          step.slots.push_back(false);
          next_keys.push_back(keys[i] >> 1);
          next_weights.push_back(weights[i]);
          i += 1;
        }
      }
      keys = std::move(next_keys);
      weights = std::move(next_weights);
    }
    leaf_count_ = m;
  }

  size_t leaf_count() const { return leaf_count_; }
  size_t ac_count() const { return leaf_count_ == 0 ? 0 : leaf_count_ - 1; }

  struct Step {
    std::vector<bool> slots;  // per output node: true = pair, false = passthrough
    std::vector<std::pair<double, double>> pair_weights;
  };
  const std::vector<Step>& steps() const { return steps_; }

 private:
  std::vector<Step> steps_;
  size_t leaf_count_ = 0;
};

struct RahtChannel {
  double dc = 0;
  std::vector<double> ac;  // leaf_count - 1 coefficients
};

/// values must be in Morton leaf order and match the plan's leaf count.
inline RahtChannel raht_forward(std::span<const double> values, const RahtPlan& plan) {
  if (values.size() != plan.leaf_count())
    throw std::invalid_argument("raht_forward: value count does not match octree leaf count");
  RahtChannel out;
  if (values.empty()) return out;
  out.ac.reserve(plan.ac_count());
  std::vector<double> cur(values.begin(), values.end());
  std::vector<double> next;
  for (const auto& step : plan.steps()) {
    next.clear();
    next.reserve(step.slots.size());
    size_t i = 0, p = 0;
    for (bool is_pair : step.slots) {
      if (is_pair) {
        auto [w1, w2] = step.pair_weights[p++];
        double s = std::sqrt(w1 + w2);
        double a = std::sqrt(w1) / s, b = std::sqrt(w2) / s;
        next.push_back(a * cur[i] + b * cur[i + 1]);
        out.ac.push_back(-b * cur[i] + a * cur[i + 1]);
        i += 2;
      } else {
        next.push_back(cur[i]);
        i += 1;
      }
    }
    std::swap(cur, next);
  }
  out.dc = cur.at(0);
  return out;
}

inline std::vector<double> raht_inverse(const RahtChannel& coeffs, const RahtPlan& plan) {
  if (plan.leaf_count() == 0) return {};
  if (coeffs.ac.size() != plan.ac_count())
    throw std::invalid_argument("raht_inverse: AC count does not match octree");

  // AC segment offsets per sub-step, in forward emission order.
  const auto& steps = plan.steps();
  std::vector<size_t> seg_begin(steps.size() + 1, 0);
  for (size_t t = 0; t < steps.size(); ++t)
    seg_begin[t + 1] = seg_begin[t] + steps[t].pair_weights.size();

  std::vector<double> cur = {coeffs.dc};
  std::vector<double> prev;
  for (size_t t = steps.size(); t-- > 0;) {
    const auto& step = steps[t];
    prev.clear();
    size_t p = 0;
    for (size_t s = 0; s < step.slots.size(); ++s) {
      if (step.slots[s]) {
        auto [w1, w2] = step.pair_weights[p];
        double n = std::sqrt(w1 + w2);
        double a = std::sqrt(w1) / n, b = std::sqrt(w2) / n;
        double dc = cur[s];
        double ac = coeffs.ac[seg_begin[t] + p];
        prev.push_back(a * dc - b * ac);
        prev.push_back(b * dc + a * ac);
        ++p;
      } else {
        prev.push_back(cur[s]);
      }
    }
    std::swap(cur, prev);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Channel assembly. The codec works on ten channels in this fixed order.
// ---------------------------------------------------------------------------

enum Channel : int {
  kOpacity = 0,
  kEulerPhi = 1,
  kEulerTheta = 2,
  kEulerPsi = 3,
  kLogScale0 = 4,
  kLogScale1 = 5,
  kLogScale2 = 6,
  kShDc0 = 7,
  kShDc1 = 8,
  kShDc2 = 9,
};

inline constexpr int kChannelCount = 10;

inline const char* channel_name(int c) {
  static const char* names[kChannelCount] = {"opacity", "euler_phi",  "euler_theta", "euler_psi",
                                             "scale_0", "scale_1",    "scale_2",
                                             "sh_dc_0", "sh_dc_1",    "sh_dc_2"};
  if (c < 0 || c >= kChannelCount) throw std::invalid_argument("unknown channel id");
  return names[c];
}

inline bool is_scale_channel(int c) { return c >= kLogScale0 && c <= kLogScale2; }

/// Per-channel transform switches. Scale channels bypass RAHT when their
/// bit-width is coarse (<= 8 bits): the exponential activation magnifies
/// transform error there.
struct TransformPlan {
  std::array<bool, kChannelCount> raht{};

  static TransformPlan all_raht() {
    TransformPlan p;
    p.raht.fill(true);
    return p;
  }
  /// channel_bits: representative bit-width per channel (e.g. the searched
  /// channel-level setting).
  static TransformPlan for_bit_widths(const std::array<int, kChannelCount>& channel_bits) {
    TransformPlan p;
    for (int c = 0; c < kChannelCount; ++c)
      p.raht[c] = !(is_scale_channel(c) && channel_bits[c] <= 8);
    return p;
  }
  uint16_t to_mask() const {
    uint16_t m = 0;
    for (int c = 0; c < kChannelCount; ++c)
      if (raht[c]) m |= uint16_t(1u << c);
    return m;
  }
  static TransformPlan from_mask(uint16_t m) {
    TransformPlan p;
    for (int c = 0; c < kChannelCount; ++c) p.raht[c] = (m >> c) & 1u;
    return p;
  }
};

/// Raw per-channel values of a deduplicated cloud, Morton order, doubles.
inline std::vector<std::vector<double>> channel_values(const GaussianCloud& cloud) {
  size_t m = cloud.count;
  std::vector<std::vector<double>> ch(kChannelCount, std::vector<double>(m));
  for (size_t i = 0; i < m; ++i) {
    Quat q{cloud.quaternions[i * 4 + 0], cloud.quaternions[i * 4 + 1],
           cloud.quaternions[i * 4 + 2], cloud.quaternions[i * 4 + 3]};
    EulerAngles e = quat_to_euler(q);
    ch[kOpacity][i] = cloud.opacity_logits[i];
    ch[kEulerPhi][i] = e.phi;
    ch[kEulerTheta][i] = e.theta;
    ch[kEulerPsi][i] = e.psi;
    for (int a = 0; a < 3; ++a) {
      ch[kLogScale0 + a][i] = cloud.log_scales[i * 3 + a];
      ch[kShDc0 + a][i] = cloud.sh_dc[i * 3 + a];
    }
  }
  return ch;
}

/// One channel ready for quantization: the AC stream of a transformed
/// channel (with its DC held aside) or the raw values of a bypassed one.
struct ChannelStream {
  bool transformed = false;
  double dc = 0;               // meaningful iff transformed
  std::vector<double> values;  // AC coefficients or raw values
};

/// Applies the plan to all ten channels.
inline std::vector<ChannelStream> assemble_channels(const GaussianCloud& cloud,
                                                    const RahtPlan& raht_plan,
                                                    const TransformPlan& plan) {
  std::vector<std::vector<double>> raw = channel_values(cloud);
  std::vector<ChannelStream> out(kChannelCount);
  for (int c = 0; c < kChannelCount; ++c) {
    if (plan.raht[c]) {
      RahtChannel t = raht_forward(raw[c], raht_plan);
      out[c].transformed = true;
      out[c].dc = t.dc;
      out[c].values = std::move(t.ac);
    } else {
      out[c].transformed = false;
      out[c].values = std::move(raw[c]);
    }
  }
  return out;
}

/// Rebuilds cloud fields (all but positions and sh_rest) from decoded
/// channel streams.
inline void disassemble_channels(const std::vector<ChannelStream>& streams,
                                 const RahtPlan& raht_plan, GaussianCloud& cloud) {
  size_t m = raht_plan.leaf_count();
  std::vector<std::vector<double>> raw(kChannelCount);
  for (int c = 0; c < kChannelCount; ++c) {
    if (streams[c].transformed) {
      RahtChannel t;
      t.dc = streams[c].dc;
      t.ac = streams[c].values;
      raw[c] = raht_inverse(t, raht_plan);
    } else {
      raw[c] = streams[c].values;
    }
    if (raw[c].size() != m) throw ContainerError("channel stream length mismatch");
  }
  for (size_t i = 0; i < m; ++i) {
    cloud.opacity_logits[i] = float(raw[kOpacity][i]);
    EulerAngles e{raw[kEulerPhi][i], raw[kEulerTheta][i], raw[kEulerPsi][i]};
    Quat q = euler_to_quat(e);
    cloud.quaternions[i * 4 + 0] = float(q.w);
    cloud.quaternions[i * 4 + 1] = float(q.x);
    cloud.quaternions[i * 4 + 2] = float(q.y);
    cloud.quaternions[i * 4 + 3] = float(q.z);
    for (int a = 0; a < 3; ++a) {
      cloud.log_scales[i * 3 + a] = float(raw[kLogScale0 + a][i]);
      cloud.sh_dc[i * 3 + a] = float(raw[kShDc0 + a][i]);
    }
  }
}

}  // namespace mgs
