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

#include "meshpose/refinement.hpp"

#include <unordered_map>

#include "lm.hpp"

namespace meshpose {
namespace {

struct DeformationProblem {
  const CameraIntrinsics& K;
  const Pose& pose;
  std::span<const Correspondence> support;
  const Mat3X& vertices;
  double huber_delta;

  double cost(const Vec3& log_d) const {
    const Vec3 d = log_d.array().exp();
    double c = 0.0;
    for (const auto& corr : support) {
      const Vec3 v = d.cwiseProduct(vertices.col(corr.vertex_index));
      const double r = reprojection_residual(K, pose.R, pose.t, corr.pixel, v);
      c += detail::huber_cost(r * r, huber_delta);
    }
    return c;
  }

  double linearize(const Vec3& log_d, Mat3& JtJ, Vec3& Jtr) const {
    const Vec3 d = log_d.array().exp();
    JtJ.setZero();
    Jtr.setZero();
    double c = 0.0;
    for (const auto& corr : support) {
      const Vec3 v = vertices.col(corr.vertex_index);
      const Vec3 X = pose.R * d.cwiseProduct(v) + pose.t;
      if (X.z() <= 1e-9) {
        c += detail::huber_cost(kBehindCameraResidual * kBehindCameraResidual, huber_delta);
        continue;
      }
      const double iz = 1.0 / X.z();
      const Vec2 r(K.fx * X.x() * iz + K.cx - corr.pixel.x(), K.fy * X.y() * iz + K.cy - corr.pixel.y());
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << K.fx * iz, 0, -K.fx * X.x() * iz * iz, 0, K.fy * iz, -K.fy * X.y() * iz * iz;
      // dX / dlog(d_j) = R e_j d_j v_j
      const Eigen::Matrix<double, 2, 3> J = dpi * pose.R * d.cwiseProduct(v).asDiagonal();
      const double w = detail::huber_weight(r.norm(), huber_delta);
      JtJ.noalias() += w * J.transpose() * J;
      Jtr.noalias() += w * J.transpose() * r;
      c += detail::huber_cost(r.squaredNorm(), huber_delta);
    }
    return c;
  }

  Vec3 retract(const Vec3& log_d, const Vec3& delta) const { return log_d + delta; }
};

void split(std::span<const Correspondence> support, const Mat3X& vertices, const Vec3& d, std::vector<Vec2>& px,
           std::vector<Vec3>& X) {
  px.clear();
  X.clear();
  for (const auto& c : support) {
    px.push_back(c.pixel);
    X.push_back(d.cwiseProduct(vertices.col(c.vertex_index)));
  }
}

}  // namespace

void RefinementParams::validate() const {
  if (!(t2 >= -1.0 && t2 <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "t2 must lie in [-1, 1]");
  if (!(pixel_threshold > 0)) throw Error(ErrorCode::kInvalidArgument, "pixel_threshold must be positive");
  if (max_iterations < 1) throw Error(ErrorCode::kInvalidArgument, "max_iterations must be positive");
}

std::vector<Correspondence> select_refinement_inliers(const CameraIntrinsics& K,
                                                      std::span<const Correspondence> correspondences,
                                                      const Mask* mask, double t2, const Pose& initial,
                                                      double pixel_threshold, const Mat3X& vertices,
                                                      std::span<const Correspondence> category_level) {
  std::unordered_map<int, const Correspondence*> by_cell;
  for (const auto& c : category_level) by_cell.emplace(c.cell, &c);

  std::vector<Correspondence> out;
  for (const auto& c : correspondences) {
    if (mask != nullptr) {
      if (c.cell < 0 || static_cast<size_t>(c.cell) >= mask->data.size() || mask->data[static_cast<size_t>(c.cell)] == 0) {
        continue;
      }
    }
    if (c.similarity < t2) continue;
    const Correspondence* gate = &c;
    if (auto it = by_cell.find(c.cell); it != by_cell.end()) gate = it->second;
    if (reprojection_residual(K, initial.R, initial.t, *gate, vertices) <= pixel_threshold) out.push_back(c);
  }
  return out;
}

DeformationFit optimize_deformation(const CameraIntrinsics& K, const Pose& pose,
                                    std::span<const Correspondence> support, const Mat3X& vertices,
                                    int max_iterations, double huber_delta) {
  if (support.size() < 3) throw Error(ErrorCode::kInsufficientSupport, "deformation needs at least 3 correspondences");
  DeformationProblem problem{K, pose, support, vertices, huber_delta};
  Vec3 log_d = Vec3::Zero();
  const auto s = detail::levenberg_marquardt<3>(problem, log_d, max_iterations);
  DeformationFit fit;
  fit.d = log_d.array().exp();
  fit.initial_cost = s.initial_cost;
  fit.final_cost = s.final_cost;
  fit.iterations = s.iterations;
  fit.converged = s.converged;
  return fit;
}

PoseRefinement optimize_pose(const CameraIntrinsics& K, const Vec3& d, std::span<const Correspondence> support,
                             const Mat3X& vertices, const Pose& initial, int max_iterations, double huber_delta) {
  std::vector<Vec2> px;
  std::vector<Vec3> X;
  split(support, vertices, d, px, X);
  return refine_pose_lm(K, px, X, initial, max_iterations, huber_delta);
}

RefinedInstance refine_instance(const RefinementProblem& problem, const RefinementParams& params) {
  params.validate();
  const auto& hyp = problem.initial;
  const Pose initial = hyp.pose();
  const Vec3 mean_size = bounding_box_size(problem.vertices);
  const double huber_delta = params.huber ? params.pixel_threshold / 2.0 : 0.0;

  const auto support = select_refinement_inliers(problem.intrinsics, problem.correspondences, problem.mask, params.t2, initial,
                                                 params.pixel_threshold, problem.vertices, problem.category_level);
  RefinedInstance out;
  out.support = static_cast<int>(support.size());
  if (out.support < kMinRefinementSupport) {
    out.pose = Pose9D::make(hyp.category, nearest_rotation(hyp.R), hyp.t, Vec3::Ones(), mean_size);
    return out;
  }

  const auto deform = optimize_deformation(problem.intrinsics, initial, support, problem.vertices,
                                           params.max_iterations, huber_delta);
  const auto pose = optimize_pose(problem.intrinsics, deform.d, support, problem.vertices, initial,
                                  params.max_iterations, huber_delta);
  out.refined = true;
  out.initial_cost = deform.initial_cost;
  out.final_cost = pose.final_cost;
  out.converged = deform.converged && pose.converged;
  out.pose = Pose9D::make(hyp.category, pose.pose.R, pose.pose.t, deform.d, mean_size.cwiseProduct(deform.d));
  return out;
}

}  // namespace meshpose
