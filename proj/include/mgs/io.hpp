#pragma once

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgs/common.hpp"
#include "mgs/search.hpp"
#include "mgs/splat.hpp"

namespace mgs {

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed for " + path);
  return data;
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot create " + path);
  f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  if (!f) throw IoError("write failed for " + path);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  write_file(path, std::vector<uint8_t>(text.begin(), text.end()));
}

/// Camera list: a JSON array of {world_to_camera: 16 floats row-major,
/// fx, fy, cx, cy, width, height, near?}.
inline std::vector<Camera> cameras_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("camera JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("camera JSON must be an array");
  std::vector<Camera> cams;
  for (const auto& item : doc) {
    try {
      Camera cam;
      const auto& w = item.at("world_to_camera");
      if (!w.is_array() || w.size() != 16)
        throw ParseError("world_to_camera must hold 16 numbers");
      for (int i = 0; i < 16; ++i) cam.world_to_camera.m[size_t(i)] = w[size_t(i)].get<double>();
      cam.fx = item.at("fx").get<double>();
      cam.fy = item.at("fy").get<double>();
      cam.cx = item.at("cx").get<double>();
      cam.cy = item.at("cy").get<double>();
      cam.width = item.at("width").get<int>();
      cam.height = item.at("height").get<int>();
      if (item.contains("near")) cam.near_clip = item.at("near").get<double>();
      cam.validate();
      cams.push_back(cam);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("camera JSON entry: ") + e.what());
    }
  }
  return cams;
}

inline std::string cameras_to_json(const std::vector<Camera>& cams) {
  nlohmann::json doc = nlohmann::json::array();
  for (const Camera& cam : cams) {
    nlohmann::json j;
    j["world_to_camera"] = cam.world_to_camera.m;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["near"] = cam.near_clip;
    doc.push_back(j);
  }
  return doc.dump(2);
}

/// Suffixed byte counts: plain bytes, or KB/MB/GB as powers of 1024.
inline double parse_byte_size(const std::string& text) {
  if (text.empty()) throw ParseError("empty size literal");
  size_t pos = 0;
  double value = 0;
  try {
    value = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad size literal: " + text);
  }
  std::string suffix = text.substr(pos);
  for (auto& ch : suffix) ch = char(std::toupper(ch));
  double mult = 1;
  if (suffix == "" || suffix == "B") mult = 1;
  else if (suffix == "KB" || suffix == "K") mult = 1024.0;
  else if (suffix == "MB" || suffix == "M") mult = 1024.0 * 1024.0;
  else if (suffix == "GB" || suffix == "G") mult = 1024.0 * 1024.0 * 1024.0;
  else throw ParseError("unknown size suffix: " + suffix);
  double bytes = value * mult;
  if (!(bytes > 0)) throw ParseError("size must be positive: " + text);
  return bytes;
}

inline nlohmann::json q_matrix_json(const BitWidthMatrix& q) {
  nlohmann::json rows = nlohmann::json::array();
  for (size_t c = 0; c < q.channels; ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (size_t j = 0; j < q.blocks; ++j) row.push_back(int(q.at(c, j)));
    rows.push_back(row);
  }
  return rows;
}

inline BitWidthMatrix q_matrix_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("Q matrix JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("Q")) doc = doc["Q"];
  if (!doc.is_array() || doc.empty() || !doc[0].is_array())
    throw ParseError("Q matrix must be a 2D array");
  BitWidthMatrix q;
  q.channels = doc.size();
  q.blocks = doc[0].size();
  q.q.reserve(q.channels * q.blocks);
  for (const auto& row : doc) {
    if (!row.is_array() || row.size() != q.blocks) throw ParseError("ragged Q matrix");
    for (const auto& v : row) {
      int b = v.get<int>();
      if (b < 0 || b > kMaxBits) throw ParseError("Q entries must be in [0,16]");
      q.q.push_back(uint8_t(b));
    }
  }
  return q;
}

inline nlohmann::json search_report_json(const SearchResult& r, double budget_bytes,
                                         const SearchConfig& cfg) {
  nlohmann::json doc;
  doc["budget_bytes"] = budget_bytes;
  doc["tolerance"] = cfg.tolerance;
  doc["tau_grid"] = cfg.tau_grid;
  doc["chosen"] = {{"tau", r.tau},
                   {"actual_bytes", r.actual_bytes},
                   {"relative_error", std::abs(r.actual_bytes - budget_bytes) / budget_bytes},
                   {"omega", r.omega},
                   {"retained_sh_vectors", r.retained},
                   {"Q", q_matrix_json(r.q)}};
  doc["keep_best_rule"] = "min_total_loss";
  if (r.alt_reading_tau >= 0) doc["literal_max_reading_tau"] = r.alt_reading_tau;
  nlohmann::json per_tau = nlohmann::json::array();
  for (const auto& d : r.per_tau) {
    nlohmann::json j;
    j["tau"] = d.tau;
    j["skipped"] = d.skipped;
    j["iterations"] = d.iterations;
    j["actual_bytes"] = d.actual_bytes;
    j["s_delta"] = d.s_delta;
    j["omega"] = d.omega;
    j["feasible"] = d.feasible;
    j["saturated"] = d.saturated;
    j["retained_sh_vectors"] = d.retained;
    if (!d.note.empty()) j["note"] = d.note;
    per_tau.push_back(j);
  }
  doc["per_tau"] = per_tau;
  return doc;
}

}  // namespace mgs
