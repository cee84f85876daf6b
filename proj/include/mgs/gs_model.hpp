#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mgs/common.hpp"

namespace mgs {

/// A 3D Gaussian Splatting model as stored on disk: raw (pre-activation)
/// values, structure-of-arrays, 32-bit floats.
struct GaussianCloud {
  size_t count = 0;
  int sh_degree = 0;                  // f in [0,3]
  std::vector<float> positions;       // N x 3
  std::vector<float> quaternions;     // N x 4, (w,x,y,z)
  std::vector<float> log_scales;      // N x 3
  std::vector<float> opacity_logits;  // N x 1
  std::vector<float> sh_dc;           // N x 3
  std::vector<float> sh_rest;         // N x D, D = 3(f+1)^2 - 3

  static int rest_dim(int sh_degree) { return 3 * (sh_degree + 1) * (sh_degree + 1) - 3; }
  int rest_dim() const { return rest_dim(sh_degree); }

  void resize(size_t n, int degree) {
    count = n;
    sh_degree = degree;
    positions.assign(n * 3, 0.f);
    quaternions.assign(n * 4, 0.f);
    log_scales.assign(n * 3, 0.f);
    opacity_logits.assign(n, 0.f);
    sh_dc.assign(n * 3, 0.f);
    sh_rest.assign(n * size_t(rest_dim(degree)), 0.f);
  }

  void validate() const {
    if (sh_degree < 0 || sh_degree > 3) throw ParseError("sh_degree out of range [0,3]");
    size_t d = size_t(rest_dim());
    if (positions.size() != count * 3 || quaternions.size() != count * 4 ||
        log_scales.size() != count * 3 || opacity_logits.size() != count ||
        sh_dc.size() != count * 3 || sh_rest.size() != count * d)
      throw ParseError("field arrays disagree on gaussian count");
    auto check = [](const std::vector<float>& v, const char* name) {
      for (float x : v)
        if (!std::isfinite(x)) throw ParseError(std::string("non-finite value in ") + name);
    };
    check(positions, "positions");
    check(quaternions, "quaternions");
    check(log_scales, "log_scales");
    check(opacity_logits, "opacity_logits");
    check(sh_dc, "sh_dc");
    check(sh_rest, "sh_rest");
  }
};

/// One Gaussian with activations applied: exp on scales, sigmoid on opacity,
/// quaternion renormalized.
struct ActivatedGaussian {
  Vec3 position;
  Quat rotation;  // unit-norm
  Vec3 scale;     // > 0 componentwise
  double opacity = 0;
  Vec3 sh_dc;
};

inline ActivatedGaussian activate(const GaussianCloud& cloud, size_t index) {
  if (index >= cloud.count) throw std::out_of_range("gaussian index out of range");
  ActivatedGaussian g;
  g.position = {cloud.positions[index * 3 + 0], cloud.positions[index * 3 + 1],
                cloud.positions[index * 3 + 2]};
  Quat q{cloud.quaternions[index * 4 + 0], cloud.quaternions[index * 4 + 1],
         cloud.quaternions[index * 4 + 2], cloud.quaternions[index * 4 + 3]};
  g.rotation = q.normalized();
  g.scale = {std::exp(double(cloud.log_scales[index * 3 + 0])),
             std::exp(double(cloud.log_scales[index * 3 + 1])),
             std::exp(double(cloud.log_scales[index * 3 + 2]))};
  g.opacity = 1.0 / (1.0 + std::exp(-double(cloud.opacity_logits[index])));
  g.sh_dc = {cloud.sh_dc[index * 3 + 0], cloud.sh_dc[index * 3 + 1], cloud.sh_dc[index * 3 + 2]};
  return g;
}

namespace detail {

/// The checkpoint property list for degree f, in emission order. The
/// reference checkpoints carry zero normals; we accept them and write zeros
/// back, but keep no field for them.
inline std::vector<std::string> ply_property_names(int sh_degree) {
  std::vector<std::string> names = {"x",  "y",  "z",      "nx",     "ny",    "nz",
                                    "f_dc_0", "f_dc_1", "f_dc_2"};
  int d = GaussianCloud::rest_dim(sh_degree);
  for (int i = 0; i < d; ++i) names.push_back("f_rest_" + std::to_string(i));
  names.push_back("opacity");
  for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
  for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
  return names;
}

}  // namespace detail

/// Parses a binary-little-endian 3DGS checkpoint PLY. Maps properties by
/// name; the exact property set for some degree f in {0..3} is required.
inline GaussianCloud load_ply(const std::vector<uint8_t>& bytes) {
  // --- header ---
  size_t pos = 0;
  auto read_line = [&]() -> std::string {
    size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) throw ParseError("PLY header not terminated");
    std::string line(bytes.begin() + start, bytes.begin() + pos);
    ++pos;  // consume '\n'
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (read_line() != "ply") throw ParseError("not a PLY file (missing 'ply' magic)");
  std::string format = read_line();
  if (format != "format binary_little_endian 1.0") {
    if (format.rfind("format ascii", 0) == 0)
      throw ParseError("ASCII PLY is not supported; expected binary_little_endian");
    throw ParseError("unsupported PLY format line: " + format);
  }

  size_t vertex_count = 0;
  bool in_vertex_element = false, seen_vertex = false;
  std::vector<std::string> props;
  for (;;) {
    std::string line = read_line();
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "comment" || tok == "obj_info") continue;
    if (tok == "element") {
      std::string name;
      size_t n;
      ss >> name >> n;
      if (name != "vertex") throw ParseError("unsupported PLY element: " + name);
      if (seen_vertex) throw ParseError("duplicate vertex element");
      vertex_count = n;
      seen_vertex = true;
      in_vertex_element = true;
    } else if (tok == "property") {
      if (!in_vertex_element) throw ParseError("property outside vertex element");
      std::string type, name;
      ss >> type >> name;
      if (type != "float") throw ParseError("property " + name + " must be float, got " + type);
      props.push_back(name);
    } else {
      throw ParseError("unrecognized PLY header line: " + line);
    }
  }
  if (!seen_vertex) throw ParseError("missing vertex element");
  if (vertex_count == 0) throw ParseError("vertex count must be >= 1");

  // --- resolve the degree from the f_rest_* count ---
  size_t rest_count = 0;
  for (const auto& p : props)
    if (p.rfind("f_rest_", 0) == 0) ++rest_count;
  int degree = -1;
  for (int f = 0; f <= 3; ++f)
    if (size_t(GaussianCloud::rest_dim(f)) == rest_count) degree = f;
  if (degree < 0)
    throw ParseError("f_rest property count " + std::to_string(rest_count) +
                     " does not match any SH degree in [0,3]");

  std::vector<std::string> expected = detail::ply_property_names(degree);
  std::vector<int> column_of(expected.size(), -1);
  for (size_t e = 0; e < expected.size(); ++e) {
    for (size_t c = 0; c < props.size(); ++c)
      if (props[c] == expected[e]) {
        if (column_of[e] >= 0) throw ParseError("duplicate property " + expected[e]);
        column_of[e] = int(c);
      }
    if (column_of[e] < 0) throw ParseError("missing property " + expected[e]);
  }
  if (props.size() != expected.size()) {
    for (const auto& p : props)
      if (std::find(expected.begin(), expected.end(), p) == expected.end())
        throw ParseError("unexpected property " + p);
  }

  size_t stride = props.size() * 4;
  if (bytes.size() - pos < vertex_count * stride)
    throw ParseError("PLY payload truncated: expected " + std::to_string(vertex_count * stride) +
                     " bytes, got " + std::to_string(bytes.size() - pos));
  if (bytes.size() - pos > vertex_count * stride)
    throw ParseError("PLY payload has trailing bytes (element count mismatch)");

  GaussianCloud cloud;
  cloud.resize(vertex_count, degree);
  size_t d = size_t(cloud.rest_dim());

  float discard = 0.f;
  auto field_slot = [&](size_t e, size_t i) -> float* {
    // expected order: x y z | nx ny nz | f_dc x3 | f_rest xD | opacity |
    // scale x3 | rot x4
    if (e < 3) return &cloud.positions[i * 3 + e];
    if (e < 6) return &discard;  // normals
    if (e < 9) return &cloud.sh_dc[i * 3 + (e - 6)];
    if (e < 9 + d) return &cloud.sh_rest[i * d + (e - 9)];
    if (e == 9 + d) return &cloud.opacity_logits[i];
    if (e < 13 + d) return &cloud.log_scales[i * 3 + (e - 10 - d)];
    return &cloud.quaternions[i * 4 + (e - 13 - d)];
  };

  const uint8_t* payload = bytes.data() + pos;
  for (size_t i = 0; i < vertex_count; ++i) {
    const uint8_t* row = payload + i * stride;
    for (size_t e = 0; e < expected.size(); ++e) {
      float v;
      std::memcpy(&v, row + size_t(column_of[e]) * 4, 4);
      if (!std::isfinite(v))
        throw ParseError("non-finite value in property " + expected[e] + " at vertex " +
                         std::to_string(i));
      *field_slot(e, i) = v;
    }
  }
  cloud.validate();
  return cloud;
}

/// Serializes to the same binary-little-endian layout load_ply accepts.
/// load_ply(save_ply(c)) reproduces c bit-exactly.
inline std::vector<uint8_t> save_ply(const GaussianCloud& cloud) {
  std::vector<std::string> names = detail::ply_property_names(cloud.sh_degree);
  std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                       std::to_string(cloud.count) + "\n";
  for (const auto& n : names) header += "property float " + n + "\n";
  header += "end_header\n";

  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + cloud.count * names.size() * 4);
  size_t d = size_t(cloud.rest_dim());
  auto put = [&](float v) {
    uint8_t b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
  };
  for (size_t i = 0; i < cloud.count; ++i) {
    for (int a = 0; a < 3; ++a) put(cloud.positions[i * 3 + a]);
    for (int a = 0; a < 3; ++a) put(0.f);  // nx ny nz
    for (int a = 0; a < 3; ++a) put(cloud.sh_dc[i * 3 + a]);
    for (size_t a = 0; a < d; ++a) put(cloud.sh_rest[i * d + a]);
    put(cloud.opacity_logits[i]);
    for (int a = 0; a < 3; ++a) put(cloud.log_scales[i * 3 + a]);
    for (int a = 0; a < 4; ++a) put(cloud.quaternions[i * 4 + a]);
  }
  return out;
}

}  // namespace mgs
