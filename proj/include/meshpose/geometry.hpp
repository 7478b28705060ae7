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

// Object prototypes, the pinhole camera and the rigid / per-axis transforms
// shared by the rest of the library.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "meshpose/types.hpp"

namespace meshpose {

struct CameraIntrinsics {
  double fx = 591.0125;
  double fy = 590.16775;
  double cx = 322.525;
  double cy = 244.11084;
  int width = 640;
  int height = 480;

  // Throws kInvalidArgument when fx/fy are non-positive or the principal
  // point lies outside the image.
  void validate() const;

  Mat3 matrix() const;

  // Intrinsics of the grid whose cell i covers pixels [s*i, s*(i+1)). A
  // point at pixel u maps to u / s in cell units, so cell centers sit at
  // pixel s * (i + 0.5).
  CameraIntrinsics downscaled(int stride) const;
};

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

struct CategoryPrototype {
  std::string category;
  Mat3X vertices;      // 3 x V, object space, box centered at the origin
  Mat3Xi triangles;    // 3 x A vertex indices
  MatX features;       // V x D, unit rows
  Vec3 mean_size = Vec3::Ones();  // unit Euclidean norm
  double mean_scale = 1.0;

  int num_vertices() const { return static_cast<int>(vertices.cols()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  // Vertices at the category's mean metric scale.
  Mat3X mean_scale_vertices() const { return vertices * mean_scale; }
};

// Prototypes sorted by category identifier; iteration order is the
// canonical (category, vertex) order used for tie-breaking.
class PrototypeSet {
 public:
  PrototypeSet() = default;
  explicit PrototypeSet(std::vector<CategoryPrototype> prototypes);

  void add(CategoryPrototype prototype);
  const CategoryPrototype* find(const std::string& category) const;
  // Throws kMissingPrototype for unknown categories.
  const CategoryPrototype& at(const std::string& category) const;

  bool empty() const { return prototypes_.empty(); }
  size_t size() const { return prototypes_.size(); }
  auto begin() const { return prototypes_.begin(); }
  auto end() const { return prototypes_.end(); }
  const CategoryPrototype& operator[](size_t i) const { return prototypes_[i]; }

 private:
  std::vector<CategoryPrototype> prototypes_;
};

struct Pose9D {
  std::string category;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3(0, 0, 1);
  Vec3 deformation = Vec3::Ones();
  Vec3 size = Vec3::Ones();
  double scale = std::sqrt(3.0);

  // Builds a pose with scale = |size|; checks R in SO(3), d > 0, t.z > 0.
  static Pose9D make(std::string category, const Mat3& R, const Vec3& t,
                     const Vec3& deformation, const Vec3& size);
};

struct SceneGroundTruth {
  std::vector<Pose9D> objects;
  CameraIntrinsics intrinsics;
};

CategoryPrototype build_prototype(const std::string& category, const Vec3& raw_mean_size,
                                  double vertices_per_unit_area, int feature_dim, uint64_t seed);

// Density giving roughly `target_vertices` vertices on the normalized box.
double density_for_vertex_count(const Vec3& raw_mean_size, int target_vertices);

// Scales vertices per axis by d; triangles and features are kept.
CategoryPrototype deform_mesh(const CategoryPrototype& prototype, const Vec3& d);

Vec3 bounding_box_size(const Mat3X& vertices);

Vec2 project_point(const CameraIntrinsics& K, const Mat3& R, const Vec3& t, const Vec3& x);

// Vertices of the ground-truth instance geometry.
enum class ShapeVariant { kMeanShape, kInstanceShape };
Mat3X instance_vertices(const CategoryPrototype& prototype, const Pose9D& pose, ShapeVariant variant);

// SO(3) helpers.
bool is_rotation(const Mat3& R, double tol = 1e-9);
Mat3 nearest_rotation(const Mat3& M);
Mat3 rotation_exp(const Vec3& omega);
double rotation_angle(const Mat3& R_a, const Mat3& R_b);
Eigen::Vector4d rotation_to_quaternion(const Mat3& R);  // (w, x, y, z), w >= 0
Mat3 quaternion_to_rotation(const Eigen::Vector4d& wxyz);
Mat3 skew(const Vec3& v);

}  // namespace meshpose
