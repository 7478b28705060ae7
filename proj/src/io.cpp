// Copyright 2026 The meshpose Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "meshpose/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace meshpose {
namespace {

using json = nlohmann::json;

constexpr char kPrototypeMagic[8] = {'M', 'P', 'P', 'R', 'O', 'T', 'O', '\0'};
constexpr char kObservationMagic[8] = {'M', 'P', 'O', 'B', 'S', '\0', '\0', '\0'};

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), os_(path, std::ios::binary) {
    if (!os_) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  }
  template <typename T>
  void put(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* data, size_t n) { os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
  void str(const std::string& s) {
    put(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish() {
    os_.flush();
    if (!os_) throw Error(ErrorCode::kIo, "write failed for " + path_);
  }

 private:
  std::string path_;
  std::ofstream os_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw Error(ErrorCode::kIo, "cannot open " + path);
  }
  template <typename T>
  T get() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* data, size_t n) {
    is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!is_) throw Error(ErrorCode::kIo, "truncated file " + path_);
  }
  std::string str(uint32_t max_len = 1u << 28) {
    const auto n = get<uint32_t>();
    if (n > max_len) throw Error(ErrorCode::kIo, "corrupt string length in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void magic(const char (&expected)[8]) {
    char m[8];
    bytes(m, 8);
    if (std::memcmp(m, expected, 8) != 0) throw Error(ErrorCode::kIo, "bad magic in " + path_);
  }

 private:
  std::string path_;
  std::ifstream is_;
};

json vec_json(const Eigen::Ref<const VecX>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec3 vec3_from(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_array() || j[field].size() != 3) {
    throw Error(ErrorCode::kIo, std::string("field '") + field + "' must be a 3-element array");
  }
  return Vec3(j[field][0].get<double>(), j[field][1].get<double>(), j[field][2].get<double>());
}

Mat3 rotation_from(const json& j) {
  if (!j.contains("quaternion") || j["quaternion"].size() != 4) {
    throw Error(ErrorCode::kIo, "field 'quaternion' must be a 4-element array");
  }
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i) q[i] = j["quaternion"][static_cast<size_t>(i)].get<double>();
  if (!(q.norm() > 0)) throw Error(ErrorCode::kIo, "zero quaternion");
  return quaternion_to_rotation(q.normalized());
}

json parse_line(const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed JSON line: ") + e.what());
  }
}

void write_map(Writer& w, const FeatureMap& map, const std::vector<CellLabel>& labels) {
  w.bytes(map.features.data(), sizeof(float) * static_cast<size_t>(map.features.size()));
  w.bytes(map.heatmap.data.data(), sizeof(float) * map.heatmap.data.size());
  for (const auto& l : labels) {
    w.put(static_cast<int32_t>(l.object));
    w.put(static_cast<int32_t>(l.vertex));
    w.put(static_cast<uint8_t>(l.replaced ? 1 : 0));
  }
}

void read_map(Reader& r, FeatureMap& map, std::vector<CellLabel>& labels) {
  r.bytes(map.features.data(), sizeof(float) * static_cast<size_t>(map.features.size()));
  r.bytes(map.heatmap.data.data(), sizeof(float) * map.heatmap.data.size());
  labels.resize(static_cast<size_t>(map.num_cells()));
  for (auto& l : labels) {
    l.object = r.get<int32_t>();
    l.vertex = r.get<int32_t>();
    l.replaced = r.get<uint8_t>() != 0;
  }
}

}  // namespace

void write_prototypes(const std::string& path, const PrototypeSet& prototypes) {
  Writer w(path);
  w.bytes(kPrototypeMagic, 8);
  w.put(kPrototypeFormatVersion);
  w.put(static_cast<uint32_t>(prototypes.size()));
  for (const auto& p : prototypes) {
    w.str(p.category);
    w.put(static_cast<uint32_t>(p.num_vertices()));
    w.put(static_cast<uint32_t>(p.triangles.cols()));
    w.put(static_cast<uint32_t>(p.feature_dim()));
    for (int a = 0; a < 3; ++a) w.put(p.mean_size[a]);
    w.put(p.mean_scale);
    w.bytes(p.vertices.data(), sizeof(double) * static_cast<size_t>(p.vertices.size()));
    const Eigen::Matrix<int32_t, 3, Eigen::Dynamic> tris = p.triangles.cast<int32_t>();
    w.bytes(tris.data(), sizeof(int32_t) * static_cast<size_t>(tris.size()));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = p.features;
    w.bytes(f.data(), sizeof(double) * static_cast<size_t>(f.size()));
  }
  w.finish();
}

PrototypeSet read_prototypes(const std::string& path) {
  Reader r(path);
  r.magic(kPrototypeMagic);
  if (r.get<uint32_t>() != kPrototypeFormatVersion) throw Error(ErrorCode::kIo, "unsupported prototype version");
  const auto count = r.get<uint32_t>();
  PrototypeSet set;
  for (uint32_t c = 0; c < count; ++c) {
    CategoryPrototype p;
    p.category = r.str(4096);
    const auto V = r.get<uint32_t>();
    const auto A = r.get<uint32_t>();
    const auto D = r.get<uint32_t>();
    if (V > (1u << 24) || A > (1u << 25) || D > (1u << 16)) throw Error(ErrorCode::kIo, "corrupt prototype header");
    for (int a = 0; a < 3; ++a) p.mean_size[a] = r.get<double>();
    p.mean_scale = r.get<double>();
    p.vertices.resize(3, V);
    r.bytes(p.vertices.data(), sizeof(double) * 3 * V);
    Eigen::Matrix<int32_t, 3, Eigen::Dynamic> tris(3, A);
    r.bytes(tris.data(), sizeof(int32_t) * 3 * A);
    if (A > 0 && (tris.minCoeff() < 0 || tris.maxCoeff() >= static_cast<int32_t>(V))) {
      throw Error(ErrorCode::kIo, "triangle index out of range");
    }
    p.triangles = tris.cast<int>();
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(V, D);
    r.bytes(f.data(), sizeof(double) * V * D);
    p.features = f;
    set.add(std::move(p));
  }
  return set;
}

std::string correspondences_to_csv(const std::vector<Correspondence>& correspondences) {
  std::string out = "pixel_x,pixel_y,category,vertex,similarity\n";
  char buf[128];
  for (const auto& c : correspondences) {
    if (c.category.find_first_of(",\n\"") != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "category names may not contain separators");
    }
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,", c.pixel.x(), c.pixel.y());
    out += buf;
    out += c.category;
    std::snprintf(buf, sizeof(buf), ",%d,%.17g\n", c.vertex_index, c.similarity);
    out += buf;
  }
  return out;
}

std::vector<Correspondence> correspondences_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("pixel_x,pixel_y,category,vertex,similarity", 0) != 0) {
    throw Error(ErrorCode::kIo, "missing correspondence CSV header");
  }
  std::vector<Correspondence> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw Error(ErrorCode::kIo, "line " + std::to_string(lineno) + ": expected 5 fields");
    try {
      Correspondence c;
      c.pixel = Vec2(std::stod(f[0]), std::stod(f[1]));
      c.category = f[2];
      c.vertex_index = std::stoi(f[3]);
      c.similarity = std::stod(f[4]);
      out.push_back(std::move(c));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kIo, "line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

std::string hypothesis_to_json(const PoseHypothesis& h) {
  json j;
  j["category"] = h.category;
  j["quaternion"] = vec_json(rotation_to_quaternion(h.R));
  j["translation"] = vec_json(h.t);
  j["inliers"] = h.inliers;
  j["score"] = h.score;
  return j.dump();
}

PoseHypothesis hypothesis_from_json(const std::string& line) {
  const json j = parse_line(line);
  try {
    PoseHypothesis h;
    h.category = j.at("category").get<std::string>();
    h.R = rotation_from(j);
    h.t = vec3_from(j, "translation");
    h.inliers = j.at("inliers").get<std::vector<int>>();
    h.score = j.at("score").get<double>();
    return h;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("bad hypothesis record: ") + e.what());
  }
}

std::string pose_to_json(const Pose9D& pose, int scene) {
  json j;
  if (scene >= 0) j["scene"] = scene;
  j["category"] = pose.category;
  j["quaternion"] = vec_json(rotation_to_quaternion(pose.R));
  j["t"] = vec_json(pose.t);
  j["d"] = vec_json(pose.deformation);
  j["s"] = vec_json(pose.size);
  return j.dump();
}

Pose9D pose_from_json(const std::string& line, int* scene) {
  const json j = parse_line(line);
  try {
    if (scene != nullptr) *scene = j.contains("scene") ? j["scene"].get<int>() : 0;
    return Pose9D::make(j.at("category").get<std::string>(), rotation_from(j), vec3_from(j, "t"), vec3_from(j, "d"),
                        vec3_from(j, "s"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("bad pose record: ") + e.what());
  }
}

std::map<int, std::vector<Pose9D>> read_pose_lines(const std::string& path) {
  std::istringstream is(read_text_file(path));
  std::map<int, std::vector<Pose9D>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    int scene = 0;
    try {
      Pose9D p = pose_from_json(line, &scene);
      out[scene].push_back(std::move(p));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_pose_lines(const std::string& path, const std::map<int, std::vector<Pose9D>>& poses) {
  std::string text;
  for (const auto& [scene, list] : poses) {
    for (const auto& p : list) text += pose_to_json(p, scene) + "\n";
  }
  write_text_file(path, text);
}

void write_observation(const std::string& path, const SimulatedObservation& obs) {
  const FeatureMap& m = obs.mean_scale_map;
  const FeatureMap& n = obs.instance_scale_map;
  if (m.width != n.width || m.height != n.height || m.stride != n.stride || m.dim() != n.dim()) {
    throw Error(ErrorCode::kShapeMismatch, "observation maps differ in shape");
  }
  Writer w(path);
  w.bytes(kObservationMagic, 8);
  w.put(kObservationFormatVersion);
  w.put(static_cast<uint32_t>(m.width));
  w.put(static_cast<uint32_t>(m.height));
  w.put(static_cast<uint32_t>(m.stride));
  w.put(static_cast<uint32_t>(m.dim()));
  write_map(w, m, obs.mean_labels);
  write_map(w, n, obs.instance_labels);
  const auto& K = obs.intrinsics;
  for (double v : {K.fx, K.fy, K.cx, K.cy, static_cast<double>(K.width), static_cast<double>(K.height)}) w.put(v);
  std::string gt;
  for (const auto& p : obs.gt.objects) gt += pose_to_json(p) + "\n";
  w.str(gt);
  w.finish();
}

SimulatedObservation read_observation(const std::string& path) {
  Reader r(path);
  r.magic(kObservationMagic);
  if (r.get<uint32_t>() != kObservationFormatVersion) throw Error(ErrorCode::kIo, "unsupported observation version");
  const auto w = r.get<uint32_t>();
  const auto h = r.get<uint32_t>();
  const auto s = r.get<uint32_t>();
  const auto d = r.get<uint32_t>();
  if (w == 0 || h == 0 || s == 0 || d == 0 || w > 65536 || h > 65536 || d > 65536) {
    throw Error(ErrorCode::kIo, "corrupt observation header");
  }
  SimulatedObservation obs;
  obs.mean_scale_map = FeatureMap(static_cast<int>(w), static_cast<int>(h), static_cast<int>(s), static_cast<int>(d));
  obs.instance_scale_map = obs.mean_scale_map;
  read_map(r, obs.mean_scale_map, obs.mean_labels);
  read_map(r, obs.instance_scale_map, obs.instance_labels);
  auto& K = obs.intrinsics;
  K.fx = r.get<double>();
  K.fy = r.get<double>();
  K.cx = r.get<double>();
  K.cy = r.get<double>();
  K.width = static_cast<int>(r.get<double>());
  K.height = static_cast<int>(r.get<double>());
  obs.gt.intrinsics = K;
  std::istringstream is(r.str());
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) obs.gt.objects.push_back(pose_from_json(line));
  }
  return obs;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  os << text;
  os.flush();
  if (!os) throw Error(ErrorCode::kIo, "write failed for " + path);
}

}  // namespace meshpose
