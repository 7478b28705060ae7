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

#include "meshpose/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace meshpose {
namespace {

double edge(const Vec2& a, const Vec2& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

bool is_top_left(const Vec2& a, const Vec2& b) {
  const double dx = b.x() - a.x();
  const double dy = b.y() - a.y();
  return (dy == 0 && dx > 0) || dy < 0;
}

}  // namespace

DepthImage render_depth(const Mat3X& camera_points, const Mat3Xi& triangles, const CameraIntrinsics& K) {
  DepthImage depth(K.width, K.height, kNoDepth);
  const Eigen::Index n = camera_points.cols();
  std::vector<Vec2> px(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& X = camera_points.col(i);
    if (X.z() <= 1e-9) throw Error(ErrorCode::kBehindCamera, "mesh vertex behind the camera");
    px[static_cast<size_t>(i)] = {K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy};
  }

  for (Eigen::Index f = 0; f < triangles.cols(); ++f) {
    int i0 = triangles(0, f), i1 = triangles(1, f), i2 = triangles(2, f);
    Vec2 p0 = px[i0], p1 = px[i1], p2 = px[i2];
    double area = edge(p0, p1, p2.x(), p2.y());
    if (area == 0) continue;
    if (area < 0) {
      std::swap(p1, p2);
      std::swap(i1, i2);
      area = -area;
    }
    const double iz0 = 1.0 / camera_points(2, i0);
    const double iz1 = 1.0 / camera_points(2, i1);
    const double iz2 = 1.0 / camera_points(2, i2);
    const bool tl12 = is_top_left(p1, p2), tl20 = is_top_left(p2, p0), tl01 = is_top_left(p0, p1);

    const double min_x = std::min({p0.x(), p1.x(), p2.x()});
    const double max_x = std::max({p0.x(), p1.x(), p2.x()});
    const double min_y = std::min({p0.y(), p1.y(), p2.y()});
    const double max_y = std::max({p0.y(), p1.y(), p2.y()});
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int x1 = std::min(K.width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int y1 = std::min(K.height - 1, static_cast<int>(std::floor(max_y - 0.5)));

    for (int y = y0; y <= y1; ++y) {
      const double sy = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double sx = x + 0.5;
        const double e0 = edge(p1, p2, sx, sy);
        const double e1 = edge(p2, p0, sx, sy);
        const double e2 = edge(p0, p1, sx, sy);
        if (e0 < 0 || e1 < 0 || e2 < 0) continue;
        if ((e0 == 0 && !tl12) || (e1 == 0 && !tl20) || (e2 == 0 && !tl01)) continue;
        const double inv_z = (e0 * iz0 + e1 * iz1 + e2 * iz2) / area;
        const double z = 1.0 / inv_z;
        double& d = depth(x, y);
        if (z < d) d = z;
      }
    }
  }
  return depth;
}

RasterResult rasterize_vertices(const Mat3X& vertices, const Mat3Xi& triangles, const CameraIntrinsics& K,
                                const Mat3& R, const Vec3& t) {
  const Mat3X cam = (R * vertices).colwise() + t;
  RasterResult out;
  out.depth = render_depth(cam, triangles, K);
  out.vertices.resize(static_cast<size_t>(vertices.cols()));
  int visible = 0;
  for (Eigen::Index k = 0; k < vertices.cols(); ++k) {
    auto& a = out.vertices[static_cast<size_t>(k)];
    const Vec3& X = cam.col(k);
    a.vertex_index = static_cast<int>(k);
    a.pixel = {K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy};
    const int x = static_cast<int>(std::floor(a.pixel.x()));
    const int y = static_cast<int>(std::floor(a.pixel.y()));
    if (x < 0 || y < 0 || x >= K.width || y >= K.height) continue;
    const double zbuf = out.depth(x, y);
    a.visible = std::isinf(zbuf) || X.z() <= zbuf * (1.0 + kVisibilityTolerance);
    visible += a.visible ? 1 : 0;
  }
  out.empty_visibility = visible == 0;
  return out;
}

SceneMasks render_prototype_masks(const SceneGroundTruth& scene, const PrototypeSet& prototypes,
                                  const CameraIntrinsics& K, MultiObjectRule rule, ShapeVariant variant) {
  SceneMasks out;
  out.foreground = Mask(K.width, K.height, 0);
  for (const auto& obj : scene.objects) {
    const auto& proto = prototypes.at(obj.category);
    const Mat3X cam = (obj.R * instance_vertices(proto, obj, variant)).colwise() + obj.t;
    out.depths.push_back(render_depth(cam, proto.triangles, K));
  }

  const size_t n_pix = out.foreground.size();
  for (size_t o = 0; o < out.depths.size(); ++o) out.objects.emplace_back(K.width, K.height, 0);
  for (size_t p = 0; p < n_pix; ++p) {
    int count = 0;
    int nearest = -1;
    double best = kNoDepth;
    for (size_t o = 0; o < out.depths.size(); ++o) {
      const double z = out.depths[o].data[p];
      if (std::isinf(z)) continue;
      ++count;
      if (z < best) {
        best = z;
        nearest = static_cast<int>(o);
      }
    }
    if (count == 0) continue;
    out.foreground.data[p] = 1;
    if (rule == MultiObjectRule::kKeepNearest) {
      out.objects[static_cast<size_t>(nearest)].data[p] = 1;
    } else if (count == 1) {
      out.objects[static_cast<size_t>(nearest)].data[p] = 1;
    }
  }
  return out;
}

void write_pgm(const std::string& path, const Mask& mask) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  os << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<char> row(static_cast<size_t>(mask.width));
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) row[static_cast<size_t>(x)] = mask(x, y) ? static_cast<char>(255) : 0;
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw Error(ErrorCode::kIo, "write failed for " + path);
}

Mask read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::kIo, "unsupported PGM " + path);
  is.get();
  Mask m(w, h, 0);
  std::vector<char> buf(m.size());
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!is) throw Error(ErrorCode::kIo, "truncated PGM " + path);
  for (size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] != 0 ? 1 : 0;
  return m;
}

}  // namespace meshpose
