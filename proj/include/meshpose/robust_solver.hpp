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

// Detection and 6D pose: P3P / EPnP solvers, locally optimized MSAC and
// sequential multi-instance fitting per category.

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "meshpose/feature_model.hpp"
#include "meshpose/geometry.hpp"

namespace meshpose {

inline constexpr double kBehindCameraResidual = 1e6;

struct PoseHypothesis {
  std::string category;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  std::vector<int> inliers;  // indices into the correspondence sequence
  double score = 0.0;        // MSAC cost, lower is better

  Pose pose() const { return {R, t}; }
};

struct SolverParams {
  double pixel_threshold = 4.0;
  int max_iterations = 2000;
  int min_inliers = 12;
  int max_instances = 8;
  double confidence = 0.999;
  // A new instance is rejected when this fraction of its support (the
  // smaller of the two sets) is also supported by an accepted instance.
  double duplicate_overlap = 0.5;
  // It is also rejected when it lies within duplicate_distance mean scales
  // and duplicate_rotation radians of an accepted instance.
  double duplicate_distance = 0.5;
  double duplicate_rotation = 0.25;

  void validate() const;
};

// Up to four poses exactly reprojecting three 2D/3D pairs. Throws
// kDegenerateConfiguration for collinear or repeated 3D points.
std::vector<Pose> solve_p3p(const std::array<Vec2, 3>& pixels, const std::array<Vec3, 3>& points,
                            const CameraIntrinsics& K);

// EPnP with Gauss-Newton refinement of the control-point betas. Coplanar
// inputs use three control points; below six points P3P solutions of every
// triplet compete on the mean reprojection error. Throws kInsufficientPoints for n < 4 and
// kDegenerateConfiguration for collinear inputs.
Pose solve_epnp(std::span<const Vec2> pixels, std::span<const Vec3> points, const CameraIntrinsics& K);

// Pixel distance between the projection of the correspondence's vertex and
// its pixel, or kBehindCameraResidual when the vertex is behind the camera.
double reprojection_residual(const CameraIntrinsics& K, const Mat3& R, const Vec3& t, const Correspondence& c,
                             const Mat3X& vertices);
double reprojection_residual(const CameraIntrinsics& K, const Mat3& R, const Vec3& t, const Vec2& pixel,
                             const Vec3& point);

struct PoseRefinement {
  Pose pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt on SO(3) x R^3 minimizing squared reprojection error.
// Rotation updates are left-multiplied axis-angle increments followed by a
// projection onto the nearest rotation. `huber_delta` > 0 enables a Huber
// kernel on the residual norms.
PoseRefinement refine_pose_lm(const CameraIntrinsics& K, std::span<const Vec2> pixels,
                              std::span<const Vec3> points, const Pose& initial, int max_iterations = 100,
                              double huber_delta = 0.0);

// Robust single-instance fit on correspondences of one category. Returns
// nullopt when fewer than min_inliers support the best model.
std::optional<PoseHypothesis> ransac_pnp(std::span<const Correspondence> correspondences, const Mat3X& vertices,
                                         const CameraIntrinsics& K, const SolverParams& params, SeedStream& rng);

// Sequential extraction of instances per category, then one global
// reassignment and refit. Each category is fitted against its prototype's
// mean_scale_vertices().
std::vector<PoseHypothesis> multi_model_pnp(std::span<const Correspondence> correspondences,
                                            const PrototypeSet& prototypes, const CameraIntrinsics& K,
                                            const SolverParams& params, const SeedStream& rng);

}  // namespace meshpose
