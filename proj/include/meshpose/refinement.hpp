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

// Instance-level refinement: re-selects support on the instance-scale map,
// estimates the per-axis deformation with the pose fixed, then re-optimizes
// the pose with the deformation fixed.

#pragma once

#include <span>
#include <vector>

#include "meshpose/feature_model.hpp"
#include "meshpose/robust_solver.hpp"

namespace meshpose {

inline constexpr int kMinRefinementSupport = 6;

struct RefinementParams {
  double t2 = 0.7;
  double pixel_threshold = 4.0;
  int max_iterations = 100;
  bool huber = false;  // kernel width pixel_threshold / 2

  void validate() const;
};

struct RefinementProblem {
  CameraIntrinsics intrinsics;   // of the pixel grid the correspondences live in
  PoseHypothesis initial;
  std::vector<Correspondence> correspondences;  // instance-scale map
  Mat3X vertices;                // category prototype at mean scale
  // Optional. Cells of the instance-scale map allowed by the foreground mask
  // (map resolution, nonzero = inside). Null means every cell is inside.
  const Mask* mask = nullptr;
  // Optional category-level correspondences of this instance. A cell that
  // has one takes the residual test on it; other cells test the
  // instance-scale correspondence itself.
  std::vector<Correspondence> category_level;
};

// Keeps correspondences that lie inside `mask` (when given), have
// similarity >= t2 and whose residual under `initial` is within
// pixel_threshold (see RefinementProblem::category_level).
std::vector<Correspondence> select_refinement_inliers(const CameraIntrinsics& K,
                                                      std::span<const Correspondence> correspondences,
                                                      const Mask* mask, double t2, const Pose& initial,
                                                      double pixel_threshold, const Mat3X& vertices,
                                                      std::span<const Correspondence> category_level = {});

struct DeformationFit {
  Vec3 d = Vec3::Ones();
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// argmin_d sum |pi(K(R(d * v) + t)) - p|^2 by Levenberg-Marquardt on log d,
// starting from d = 1. Throws kInsufficientSupport below three
// correspondences.
DeformationFit optimize_deformation(const CameraIntrinsics& K, const Pose& pose,
                                    std::span<const Correspondence> support, const Mat3X& vertices,
                                    int max_iterations = 100, double huber_delta = 0.0);

// Pose re-optimization against the deformed vertices d * v.
PoseRefinement optimize_pose(const CameraIntrinsics& K, const Vec3& d, std::span<const Correspondence> support,
                             const Mat3X& vertices, const Pose& initial, int max_iterations = 100,
                             double huber_delta = 0.0);

struct RefinedInstance {
  Pose9D pose;
  bool refined = false;  // false: fell back to the 6D pose with d = 1
  int support = 0;
  double initial_cost = 0.0;  // mean-shape cost at the 6D pose
  double final_cost = 0.0;
  bool converged = false;
};

RefinedInstance refine_instance(const RefinementProblem& problem, const RefinementParams& params);

}  // namespace meshpose
