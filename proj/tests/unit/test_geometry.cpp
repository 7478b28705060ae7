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

#include <algorithm>
#include <map>

#include "meshpose/geometry.hpp"
#include "test_util.hpp"

namespace meshpose {
namespace {

using testing::check_error;

double box_surface_distance(const Vec3& p, const Vec3& half) {
  // Distance to the surface of the box for a point assumed inside or on it.
  const Vec3 gap = half - p.cwiseAbs();
  if ((gap.array() < -1e-15).any()) return (p.cwiseAbs() - half).cwiseMax(0.0).norm();
  return gap.minCoeff();
}

TEST_CASE("build_prototype normalizes the mean size") {
  const auto p = build_prototype("cube", Vec3(1, 1, 1), 2000.0, 16, 3);
  CHECK((p.mean_size - Vec3::Constant(1.0 / std::sqrt(3.0))).norm() < 1e-12);
  CHECK(p.mean_scale == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));

  const Vec3 raw(0.14, 0.10, 0.10);
  const auto q = build_prototype("mug", raw, 500.0, 8, 1);
  CHECK(std::abs(q.mean_size.norm() - 1.0) < 1e-9);
  CHECK((q.mean_size.normalized() - q.mean_size).norm() < 1e-12);
  CHECK((q.mean_scale * q.mean_size - raw).norm() < 1e-9);
}

TEST_CASE("build_prototype satisfies the prototype invariants") {
  const auto p = build_prototype("laptop", Vec3(0.35, 0.22, 0.28), 600.0, 12, 7);
  const Vec3 half = 0.5 * p.mean_size;
  for (int k = 0; k < p.num_vertices(); ++k) {
    CHECK(box_surface_distance(p.vertices.col(k), half) < 1e-9);
    CHECK(std::abs(p.features.row(k).norm() - 1.0) < 1e-9);
  }
  CHECK(p.triangles.minCoeff() >= 0);
  CHECK(p.triangles.maxCoeff() < p.num_vertices());
  CHECK((bounding_box_size(p.vertices) - p.mean_size).norm() < 1e-9);
}

TEST_CASE("build_prototype allocates face cells in proportion to area") {
  // Oracle: classify every triangle by the box face all its vertices lie on
  // and count cells (two triangles each) per face.
  const auto p = build_prototype("slab", Vec3(2, 1, 1), 3000.0, 4, 0);
  const Vec3 half = 0.5 * p.mean_size;
  std::map<int, int> tris_per_axis;
  for (int f = 0; f < p.triangles.cols(); ++f) {
    for (int axis = 0; axis < 3; ++axis) {
      bool on_face = true;
      const double sign = p.vertices(axis, p.triangles(0, f)) > 0 ? 1.0 : -1.0;
      for (int c = 0; c < 3; ++c) {
        on_face = on_face && std::abs(p.vertices(axis, p.triangles(c, f)) - sign * half[axis]) < 1e-12;
      }
      if (on_face) {
        ++tris_per_axis[axis];
        break;
      }
    }
  }
  const double x_cells = tris_per_axis[0] / 4.0;  // two faces, two triangles per cell
  const double z_cells = tris_per_axis[2] / 4.0;
  CHECK(tris_per_axis[0] + tris_per_axis[1] + tris_per_axis[2] == p.triangles.cols());
  CHECK(z_cells / x_cells == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("build_prototype is deterministic and validates inputs") {
  const auto a = build_prototype("can", Vec3(0.07, 0.12, 0.07), 400.0, 16, 42);
  const auto b = build_prototype("can", Vec3(0.07, 0.12, 0.07), 400.0, 16, 42);
  CHECK(a.vertices == b.vertices);
  CHECK(a.triangles == b.triangles);
  CHECK(a.features == b.features);
  check_error([] { build_prototype("x", Vec3(1, 0, 1), 100.0, 8, 0); }, ErrorCode::kInvalidSize);
  check_error([] { build_prototype("x", Vec3(1, -1, 1), 100.0, 8, 0); }, ErrorCode::kInvalidSize);
  check_error([] { build_prototype("x", Vec3(1, 1, 1), 1.0, 8, 0); }, ErrorCode::kInsufficientResolution);
}

TEST_CASE("density_for_vertex_count lands near the requested vertex count") {
  const Vec3 raw(0.09, 0.22, 0.09);
  const auto p = build_prototype("bottle", raw, density_for_vertex_count(raw, 1058), 8, 0);
  CHECK(p.num_vertices() == doctest::Approx(1058).epsilon(0.1));
}

TEST_CASE("deform_mesh scales vertices per axis") {
  auto p = build_prototype("mug", Vec3(0.14, 0.10, 0.10), 300.0, 8, 5);
  const auto same = deform_mesh(p, Vec3::Ones());
  CHECK(same.vertices == p.vertices);

  CategoryPrototype one = p;
  one.vertices = Mat3X(3, 1);
  one.vertices.col(0) = Vec3(0.5, 0.2, 0.1);
  CHECK((deform_mesh(one, Vec3(2, 1, 1)).vertices.col(0) - Vec3(1.0, 0.2, 0.1)).norm() == 0.0);

  SeedStream rng(9);
  for (int i = 0; i < 20; ++i) {
    const Vec3 d(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0));
    const auto q = deform_mesh(p, d);
    // Oracle: recompute the extents directly from the deformed coordinates.
    Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
    for (int k = 0; k < q.num_vertices(); ++k) {
      lo = lo.cwiseMin(q.vertices.col(k));
      hi = hi.cwiseMax(q.vertices.col(k));
    }
    CHECK(((hi - lo) - d.cwiseProduct(bounding_box_size(p.vertices))).norm() < 1e-12);
    CHECK(q.triangles == p.triangles);
    CHECK(q.features == p.features);
  }
  const Vec3 a(1.1, 0.8, 1.3), b(0.7, 1.2, 0.9);
  CHECK((deform_mesh(deform_mesh(p, a), b).vertices - deform_mesh(p, a.cwiseProduct(b)).vertices).norm() < 1e-12);
  check_error([&] { deform_mesh(p, Vec3(1, 0, 1)); }, ErrorCode::kInvalidDeformation);
}

TEST_CASE("bounding_box_size") {
  Mat3X cube(3, 8);
  for (int i = 0; i < 8; ++i) cube.col(i) = Vec3(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  CHECK(bounding_box_size(cube) == Vec3(1, 1, 1));
  CHECK(bounding_box_size(Mat3X(Vec3(3, 4, 5))) == Vec3::Zero());
  check_error([] { bounding_box_size(Mat3X(3, 0)); }, ErrorCode::kEmptyInput);
}

TEST_CASE("project_point") {
  CameraIntrinsics K;
  K.fx = K.fy = 500;
  K.cx = 320;
  K.cy = 240;
  CHECK((project_point(K, Mat3::Identity(), Vec3::Zero(), Vec3(0, 0, 1)) - Vec2(320, 240)).norm() == 0.0);
  CHECK((project_point(K, Mat3::Identity(), Vec3(0, 0, 1), Vec3(0.1, 0, 0)) - Vec2(370, 240)).norm() < 1e-12);
  testing::check_error([&] { project_point(K, Mat3::Identity(), Vec3::Zero(), Vec3(0, 0, -1)); },
                       ErrorCode::kBehindCamera);

  SeedStream rng(4);
  const CameraIntrinsics K2;
  for (int i = 0; i < 100; ++i) {
    const Mat3 R = testing::random_rotation(rng);
    const Vec3 t(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(1.0, 3.0));
    const Vec3 x(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
    // 4x4 homogeneous oracle: P = K [I|0] T.
    Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
    T.topLeftCorner<3, 3>() = R;
    T.topRightCorner<3, 1>() = t;
    Eigen::Matrix<double, 3, 4> P = Eigen::Matrix<double, 3, 4>::Zero();
    P.leftCols<3>() = K2.matrix();
    const Vec3 h = P * T * Eigen::Vector4d(x.x(), x.y(), x.z(), 1.0);
    CHECK((project_point(K2, R, t, x) - h.hnormalized()).norm() < 1e-9);
    // Joint rescaling of (x, t) leaves the projection unchanged.
    const double alpha = rng.uniform(0.2, 5.0);
    CHECK((project_point(K2, R, alpha * t, alpha * x) - project_point(K2, R, t, x)).norm() < 1e-9);
  }
}

TEST_CASE("CameraIntrinsics validation and downscaling") {
  CameraIntrinsics K;
  K.validate();
  CameraIntrinsics bad = K;
  bad.cx = 700;
  testing::check_error([&] { bad.validate(); }, ErrorCode::kInvalidArgument);
  bad = K;
  bad.fx = 0;
  testing::check_error([&] { bad.validate(); }, ErrorCode::kInvalidArgument);
  // A point at pixel u lands at u / s on the grid.
  const CameraIntrinsics g = K.downscaled(4);
  const Vec3 x(0.05, -0.02, 0.9);
  CHECK((project_point(g, Mat3::Identity(), Vec3::Zero(), x) * 4.0 -
         project_point(K, Mat3::Identity(), Vec3::Zero(), x))
            .norm() < 1e-9);
}

TEST_CASE("Pose9D::make enforces its invariants") {
  const Pose9D p = Pose9D::make("mug", Mat3::Identity(), Vec3(0, 0, 1), Vec3(1, 1, 1), Vec3(0.3, 0.4, 0.1));
  CHECK(p.scale == p.size.norm());
  testing::check_error([] { Pose9D::make("mug", 2.0 * Mat3::Identity(), Vec3(0, 0, 1), Vec3::Ones(), Vec3::Ones()); },
                       ErrorCode::kInvalidRotation);
  testing::check_error([] { Pose9D::make("mug", Mat3::Identity(), Vec3(0, 0, 1), Vec3(1, -1, 1), Vec3::Ones()); },
                       ErrorCode::kInvalidDeformation);
  testing::check_error([] { Pose9D::make("mug", Mat3::Identity(), Vec3(0, 0, -1), Vec3::Ones(), Vec3::Ones()); },
                       ErrorCode::kBehindCamera);
}

TEST_CASE("SO(3) helpers") {
  SeedStream rng(12);
  for (int i = 0; i < 50; ++i) {
    const Mat3 R = testing::random_rotation(rng);
    CHECK(is_rotation(R));
    CHECK((quaternion_to_rotation(rotation_to_quaternion(R)) - R).norm() < 1e-12);
    CHECK(rotation_to_quaternion(R)[0] >= 0);
    const Vec3 w = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized() * rng.uniform(0.0, 3.0);
    CHECK((rotation_exp(w) - testing::axis_angle(w, w.norm())).norm() < 1e-12);
    CHECK(rotation_angle(R, rotation_exp(w) * R) == doctest::Approx(w.norm()).epsilon(1e-9));
    const Mat3 noisy = R + 1e-3 * Mat3::Random();
    CHECK(is_rotation(nearest_rotation(noisy)));
    CHECK(testing::geodesic(nearest_rotation(noisy), R) < 1e-2);
  }
  CHECK((skew(Vec3(1, 2, 3)) * Vec3(4, 5, 6) - Vec3(1, 2, 3).cross(Vec3(4, 5, 6))).norm() < 1e-15);
}

TEST_CASE("instance_vertices") {
  const auto p = build_prototype("bowl", Vec3(0.17, 0.08, 0.17), 300.0, 8, 2);
  const Vec3 d(1.2, 0.8, 1.0);
  const Vec3 size = 0.3 * d.cwiseProduct(p.mean_size).normalized();
  const Pose9D pose = Pose9D::make("bowl", Mat3::Identity(), Vec3(0, 0, 1), d, size);
  CHECK((bounding_box_size(instance_vertices(p, pose, ShapeVariant::kInstanceShape)) - size).norm() < 1e-12);
  CHECK((bounding_box_size(instance_vertices(p, pose, ShapeVariant::kMeanShape)) - pose.scale * p.mean_size).norm() <
        1e-12);
}

TEST_CASE("PrototypeSet lookup") {
  PrototypeSet set;
  set.add(build_prototype("mug", Vec3(0.14, 0.10, 0.10), 100.0, 4, 0));
  set.add(build_prototype("bottle", Vec3(0.09, 0.22, 0.09), 100.0, 4, 0));
  CHECK(set.size() == 2);
  CHECK(set[0].category == "bottle");
  CHECK(set.find("can") == nullptr);
  testing::check_error([&] { set.at("can"); }, ErrorCode::kMissingPrototype);
}

}  // namespace
}  // namespace meshpose
