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

#include <filesystem>
#include <optional>

#include "meshpose/rasterizer.hpp"
#include "test_util.hpp"

namespace meshpose {
namespace {

// Smallest ray parameter s in (0, 1] at which the segment origin -> p hits a
// triangle (Moller-Trumbore), or nullopt.
std::optional<double> first_hit(const Mat3X& cam, const Mat3Xi& tris, const Vec3& p) {
  std::optional<double> best;
  for (int f = 0; f < tris.cols(); ++f) {
    const Vec3 a = cam.col(tris(0, f)), b = cam.col(tris(1, f)), c = cam.col(tris(2, f));
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 h = p.cross(e2);
    const double det = e1.dot(h);
    if (std::abs(det) < 1e-15) continue;
    const double inv = 1.0 / det;
    const double u = a.dot(h) * -inv;  // origin is 0, so s = -a
    if (u < -1e-12 || u > 1 + 1e-12) continue;
    const Vec3 q = (-a).cross(e1);
    const double v = p.dot(q) * inv;
    if (v < -1e-12 || u + v > 1 + 1e-12) continue;
    const double s = e2.dot(q) * inv;
    if (s > 1e-12 && (!best || s < *best)) best = s;
  }
  return best;
}

struct Scene {
  CategoryPrototype proto = build_prototype("cube", Vec3(1, 1, 1), 400.0, 4, 1);
  CameraIntrinsics K;
};

TEST_CASE("front face visible, back face interior hidden (ray-cast oracle)") {
  Scene s;
  const Mat3X verts = 0.3 * s.proto.vertices;
  const Vec3 t(0.0, 0.0, 1.5);
  const auto r = rasterize_vertices(verts, s.proto.triangles, s.K, Mat3::Identity(), t);
  REQUIRE(r.vertices.size() == static_cast<size_t>(verts.cols()));
  const double half = 0.5 * bounding_box_size(verts).z();
  int front = 0, back = 0;
  for (int k = 0; k < verts.cols(); ++k) {
    const Vec3 p = verts.col(k) + t;
    const auto hit = first_hit(verts.colwise() + t, s.proto.triangles, p);
    const bool oracle_visible = !hit || *hit > 1.0 - 1e-9;
    const bool on_front = std::abs(verts(2, k) + half) < 1e-12;
    const bool back_interior = std::abs(verts(2, k) - half) < 1e-12 && std::abs(verts(0, k)) < half - 1e-9 &&
                               std::abs(verts(1, k)) < half - 1e-9;
    if (on_front) {
      ++front;
      CHECK(oracle_visible);
      CHECK(r.vertices[static_cast<size_t>(k)].visible);
    }
    if (back_interior) {
      ++back;
      CHECK_FALSE(oracle_visible);
      CHECK_FALSE(r.vertices[static_cast<size_t>(k)].visible);
    }
    // With the face-on pose every vertex is either clearly hidden or clearly
    // exposed, so the rasterizer must agree with the oracle everywhere.
    CHECK(r.vertices[static_cast<size_t>(k)].visible == oracle_visible);
  }
  CHECK(front > 10);
  CHECK(back > 10);
  CHECK_FALSE(r.empty_visibility);
}

TEST_CASE("rotated cube agrees with the ray-cast oracle away from grazing faces") {
  Scene s;
  SeedStream rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 R = testing::random_rotation(rng);
    const Vec3 t(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(1.2, 2.0));
    const Mat3X verts = 0.3 * s.proto.vertices;
    const Mat3X cam = (R * verts).colwise() + t;
    const auto r = rasterize_vertices(verts, s.proto.triangles, s.K, R, t);
    for (int k = 0; k < verts.cols(); ++k) {
      const Vec3 p = cam.col(k);
      const auto hit = first_hit(cam, s.proto.triangles, p);
      const bool visible = r.vertices[static_cast<size_t>(k)].visible;
      if (hit && *hit < 0.98) CHECK_FALSE(visible);
      if (!hit || *hit > 1.0 - 1e-9) {
        // Exposed: the rasterizer must agree unless every face at the vertex
        // is seen obliquely, where the depth change across half a pixel
        // exceeds the relative visibility tolerance.
        const Vec3 local = verts.col(k);
        const Vec3 half = 0.5 * bounding_box_size(verts);
        double best_cos = 0.0;
        for (int a = 0; a < 3; ++a) {
          if (std::abs(std::abs(local[a]) - half[a]) > 1e-12) continue;
          const Vec3 n = R.col(a) * (local[a] > 0 ? 1.0 : -1.0);
          best_cos = std::max(best_cos, -n.dot(p.normalized()));
        }
        if (best_cos > 0.9) CHECK(visible);
      }
    }
  }
}

TEST_CASE("rasterize_vertices edge cases") {
  Scene s;
  const Mat3X verts = 0.3 * s.proto.vertices;
  const auto out = rasterize_vertices(verts, s.proto.triangles, s.K, Mat3::Identity(), Vec3(10.0, 0.0, 2.0));
  for (const auto& v : out.vertices) CHECK_FALSE(v.visible);
  CHECK(out.empty_visibility);

  const auto a = rasterize_vertices(verts, s.proto.triangles, s.K, Mat3::Identity(), Vec3(0.01, 0.02, 1.0));
  const auto b = rasterize_vertices(verts, s.proto.triangles, s.K, Mat3::Identity(), Vec3(0.01, 0.02, 1.0));
  for (size_t k = 0; k < a.vertices.size(); ++k) {
    CHECK(a.vertices[k].visible == b.vertices[k].visible);
    CHECK(a.vertices[k].pixel == b.vertices[k].pixel);
  }
  testing::check_error(
      [&] { rasterize_vertices(verts, s.proto.triangles, s.K, Mat3::Identity(), Vec3(0.0, 0.0, 0.05)); },
      ErrorCode::kBehindCamera);
}

TEST_CASE("render_depth matches the analytic plane depth") {
  // A square facing the camera at z = 2 must read depth 2 at covered pixels.
  Mat3X pts(3, 4);
  pts << -0.2, 0.2, 0.2, -0.2, -0.2, -0.2, 0.2, 0.2, 2, 2, 2, 2;
  Mat3Xi tris(3, 2);
  tris << 0, 0, 1, 2, 2, 3;
  const CameraIntrinsics K;
  const DepthImage d = render_depth(pts, tris, K);
  const Vec2 lo = project_point(K, Mat3::Identity(), Vec3::Zero(), pts.col(0));
  const Vec2 hi = project_point(K, Mat3::Identity(), Vec3::Zero(), pts.col(2));
  int covered = 0;
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const bool inside = x + 0.5 > lo.x() + 1e-9 && x + 0.5 < hi.x() - 1e-9 && y + 0.5 > lo.y() + 1e-9 &&
                          y + 0.5 < hi.y() - 1e-9;
      if (inside) {
        ++covered;
        CHECK(d(x, y) == doctest::Approx(2.0).epsilon(1e-12));
      }
      const bool outside = x + 0.5 < lo.x() - 1e-9 || x + 0.5 > hi.x() + 1e-9 || y + 0.5 < lo.y() - 1e-9 ||
                           y + 0.5 > hi.y() + 1e-9;
      if (outside) CHECK(d(x, y) == kNoDepth);
    }
  }
  CHECK(covered > 1000);
}

SceneGroundTruth two_boxes(const Vec3& t0, const Vec3& t1) {
  SceneGroundTruth gt;
  const Vec3 size = 0.2 * Vec3(1, 1, 1).normalized();
  gt.objects.push_back(Pose9D::make("cube", Mat3::Identity(), t0, Vec3::Ones(), size));
  gt.objects.push_back(Pose9D::make("cube", Mat3::Identity(), t1, Vec3::Ones(), size));
  return gt;
}

TEST_CASE("render_prototype_masks") {
  PrototypeSet protos;
  protos.add(build_prototype("cube", Vec3(1, 1, 1), 300.0, 4, 0));
  const CameraIntrinsics K = CameraIntrinsics().downscaled(4);

  SceneGroundTruth single;
  single.objects.push_back(
      Pose9D::make("cube", Mat3::Identity(), Vec3(0, 0, 1), Vec3::Ones(), 0.2 * Vec3(1, 1, 1).normalized()));
  const auto one = render_prototype_masks(single, protos, K);
  CHECK(one.objects[0].data == one.foreground.data);

  const auto same = render_prototype_masks(two_boxes(Vec3(0, 0, 1), Vec3(0, 0, 1)), protos, K);
  int fg = 0;
  for (size_t i = 0; i < same.foreground.size(); ++i) {
    fg += same.foreground.data[i] != 0;
    CHECK(same.objects[0].data[i] == 0);
    CHECK(same.objects[1].data[i] == 0);
  }
  CHECK(fg > 0);

  // Partial overlap, the second box farther away.
  const auto gt = two_boxes(Vec3(0, 0, 1), Vec3(0.05, 0.02, 1.3));
  const auto nearest = render_prototype_masks(gt, protos, K, MultiObjectRule::kKeepNearest);
  const auto overlaps = render_prototype_masks(gt, protos, K, MultiObjectRule::kMaskOverlaps);
  const auto alone = render_prototype_masks(SceneGroundTruth{{gt.objects[1]}, gt.intrinsics}, protos, K);
  int shared = 0;
  for (size_t i = 0; i < nearest.foreground.size(); ++i) {
    const double d0 = nearest.depths[0].data[i], d1 = nearest.depths[1].data[i];
    if (d0 != kNoDepth && d1 != kNoDepth) {
      ++shared;
      CHECK((nearest.objects[0].data[i] != 0) == (d0 <= d1));
      CHECK((nearest.objects[1].data[i] != 0) == (d1 < d0));
      CHECK(overlaps.objects[0].data[i] == 0);
      CHECK(overlaps.objects[1].data[i] == 0);
    }
    CHECK((overlaps.objects[0].data[i] != 0) + (overlaps.objects[1].data[i] != 0) <= 1);
    // Adding another object never adds pixels to an object's mask.
    if (overlaps.objects[1].data[i]) CHECK(alone.objects[0].data[i] != 0);
  }
  CHECK(shared > 0);

  SceneGroundTruth unknown;
  unknown.objects.push_back(Pose9D::make("mug", Mat3::Identity(), Vec3(0, 0, 1), Vec3::Ones(), Vec3::Ones()));
  testing::check_error([&] { render_prototype_masks(unknown, protos, K); }, ErrorCode::kMissingPrototype);
}

TEST_CASE("PGM round trip") {
  Mask m(7, 5, 0);
  m(1, 2) = 255;
  m(6, 4) = 255;
  const auto path = (std::filesystem::temp_directory_path() / "meshpose_test_mask.pgm").string();
  write_pgm(path, m);
  const Mask back = read_pgm(path);
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  for (size_t i = 0; i < m.size(); ++i) CHECK((back.data[i] != 0) == (m.data[i] != 0));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace meshpose
