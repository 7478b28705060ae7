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

// Synthetic scenes standing in for a trained feature extractor, and the
// end-to-end inference pipeline that consumes them.

#pragma once

#include <string>
#include <vector>

#include "meshpose/feature_model.hpp"
#include "meshpose/refinement.hpp"
#include "meshpose/robust_solver.hpp"

namespace meshpose {

struct CategorySpec {
  std::string name;
  Vec3 raw_size;  // mean box extents in meters
};

// bottle, bowl, camera, can, laptop, mug.
std::vector<CategorySpec> default_categories();

enum class KappaMode {
  kRaw,             // kappa_sim used as is
  kPerDimension,    // kappa_sim * (D - 1) / 2
};

struct SimConfig {
  std::vector<CategorySpec> categories = default_categories();
  int min_instances = 1;
  int max_instances = 4;
  bool single_category = false;  // every instance of a scene shares one category
  double min_depth = 0.5;
  double max_depth = 2.0;
  double min_scale_factor = 0.8;  // instance scale relative to the category mean
  double max_scale_factor = 1.2;
  double min_deformation = 0.7;
  double max_deformation = 1.3;
  double kappa_sim = kDefaultKappa;
  KappaMode kappa_mode = KappaMode::kPerDimension;
  double outlier_rate = 0.0;
  double distractor_rate = 0.0;  // background cells drawn near wrong vertices
  double heatmap_sigma = 0.05;
  double pixel_jitter = 0.0;     // std of the sampling position, pixels
  bool occlusion = false;        // false: reject placements overlapping > max_overlap
  double max_overlap = 0.8;
  int stride = 4;
  int feature_dim = 64;
  int target_vertices = 1058;
  CameraIntrinsics intrinsics;

  void validate() const;
  double effective_kappa() const;
};

// One prototype per configured category; features depend only on the
// category name and `seed`.
PrototypeSet make_prototypes(const SimConfig& config, uint64_t seed);

struct CellLabel {
  int object = -1;  // -1: background or overlapping objects
  int vertex = -1;
  bool replaced = false;  // feature overwritten by an outlier
};

struct SimulatedObservation {
  CameraIntrinsics intrinsics;
  FeatureMap mean_scale_map;
  FeatureMap instance_scale_map;
  SceneGroundTruth gt;
  std::vector<CellLabel> mean_labels;
  std::vector<CellLabel> instance_labels;
};

// Rotations are Haar-uniform, centers uniform over the image at a uniform
// depth, and every projected box lies inside the image. Throws
// kPlacementFailure after 1000 failed attempts for one instance.
SceneGroundTruth generate_scene(const SimConfig& config, const PrototypeSet& prototypes, SeedStream& rng);

SimulatedObservation synthesize_feature_maps(const SceneGroundTruth& scene, const PrototypeSet& prototypes,
                                             const SimConfig& config, SeedStream& rng);

// Axis-aligned image rectangle (x0, y0, x1, y1) of a box's projected corners.
Eigen::Vector4d projected_rect(const Pose9D& pose, const CameraIntrinsics& K);
// Intersection area over the smaller rectangle area.
double rect_overlap(const Eigen::Vector4d& a, const Eigen::Vector4d& b);

struct PipelineParams {
  double t1 = 0.5;
  double t2 = 0.7;
  SolverParams solver;
  RefinementParams refinement;
  bool refine = true;

  void validate() const;
};

struct PipelineOutput {
  std::vector<PoseHypothesis> hypotheses;
  std::vector<Correspondence> mean_correspondences;
  std::vector<Pose9D> rigid;    // 6D pose with d = 1 and the mean size
  std::vector<Pose9D> refined;  // final 9D poses, same order
  std::vector<RefinedInstance> details;
};

PipelineOutput run_pipeline(const FeatureMap& mean_scale_map, const FeatureMap& instance_scale_map,
                            const CameraIntrinsics& K, const PrototypeSet& prototypes, const PipelineParams& params,
                            const SeedStream& rng);
// Reads only the observation's maps and intrinsics.
PipelineOutput run_pipeline(const SimulatedObservation& observation, const PrototypeSet& prototypes,
                            const PipelineParams& params, const SeedStream& rng);

}  // namespace meshpose
