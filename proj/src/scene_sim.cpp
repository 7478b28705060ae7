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

#include "meshpose/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace meshpose {
namespace {

constexpr int kMaxPlacementAttempts = 1000;

Mat3 haar_rotation(SeedStream& rng) {
  Eigen::Vector4d q;
  do {
    for (int i = 0; i < 4; ++i) q[i] = rng.normal();
  } while (q.norm() < 1e-12);
  return quaternion_to_rotation(q.normalized());
}

std::array<Vec3, 8> box_corners(const Pose9D& pose) {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 sign((i & 1) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5, (i & 4) ? 0.5 : -0.5);
    out[static_cast<size_t>(i)] = pose.R * sign.cwiseProduct(pose.size) + pose.t;
  }
  return out;
}

struct VisibleVertex {
  int index;
  Vec2 pixel;
};

// Visible vertices of every object against the combined scene z-buffer.
std::vector<std::vector<VisibleVertex>> scene_visibility(const SceneGroundTruth& scene,
                                                         const PrototypeSet& prototypes, ShapeVariant variant,
                                                         const CameraIntrinsics& K) {
  std::vector<Mat3X> cams;
  DepthImage zbuf(K.width, K.height, kNoDepth);
  for (const auto& obj : scene.objects) {
    const auto& proto = prototypes.at(obj.category);
    cams.push_back((obj.R * instance_vertices(proto, obj, variant)).colwise() + obj.t);
    const DepthImage depth = render_depth(cams.back(), proto.triangles, K);
    for (size_t p = 0; p < zbuf.size(); ++p) zbuf.data[p] = std::min(zbuf.data[p], depth.data[p]);
  }
  std::vector<std::vector<VisibleVertex>> out(cams.size());
  for (size_t o = 0; o < cams.size(); ++o) {
    const Mat3X& cam = cams[o];
    for (int v = 0; v < cam.cols(); ++v) {
      const Vec3 X = cam.col(v);
      const Vec2 px(K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy);
      if (!(px.x() >= 0 && px.x() < K.width && px.y() >= 0 && px.y() < K.height)) continue;
      const double z = zbuf(static_cast<int>(px.x()), static_cast<int>(px.y()));
      if (std::isinf(z) || X.z() <= z * (1.0 + kVisibilityTolerance)) out[o].push_back({v, px});
    }
  }
  return out;
}

}  // namespace

std::vector<CategorySpec> default_categories() {
  return {{"bottle", Vec3(0.09, 0.22, 0.09)}, {"bowl", Vec3(0.17, 0.08, 0.17)},
          {"camera", Vec3(0.13, 0.10, 0.14)}, {"can", Vec3(0.07, 0.12, 0.07)},
          {"laptop", Vec3(0.35, 0.22, 0.28)}, {"mug", Vec3(0.14, 0.10, 0.10)}};
}

void SimConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); };
  if (categories.empty()) fail("at least one category is required");
  if (min_instances < 0 || max_instances < min_instances) fail("instance range must satisfy 0 <= min <= max");
  if (!(min_depth > 0) || !(max_depth > min_depth)) fail("depth range must satisfy 0 < min < max");
  if (!(min_scale_factor > 0) || !(max_scale_factor >= min_scale_factor)) fail("scale range is degenerate");
  if (!(min_deformation > 0) || !(max_deformation >= min_deformation)) fail("deformation range is degenerate");
  if (!(kappa_sim >= 0)) throw Error(ErrorCode::kInvalidConcentration, "kappa_sim must be >= 0");
  if (!(outlier_rate >= 0 && outlier_rate < 1)) fail("outlier_rate must lie in [0, 1)");
  if (!(distractor_rate >= 0 && distractor_rate <= 1)) fail("distractor_rate must lie in [0, 1]");
  if (!(heatmap_sigma >= 0)) fail("heatmap_sigma must be >= 0");
  if (!(pixel_jitter >= 0)) fail("pixel_jitter must be >= 0");
  if (!(max_overlap >= 0 && max_overlap <= 1)) fail("max_overlap must lie in [0, 1]");
  if (stride < 1 || intrinsics.width % stride != 0 || intrinsics.height % stride != 0) {
    fail("stride must divide the image size");
  }
  if (feature_dim < 2) fail("feature_dim must be at least 2");
  if (target_vertices < 8) fail("target_vertices must be at least 8");
  intrinsics.validate();
}

double SimConfig::effective_kappa() const {
  return kappa_mode == KappaMode::kRaw ? kappa_sim : kappa_sim * (feature_dim - 1) / 2.0;
}

PrototypeSet make_prototypes(const SimConfig& config, uint64_t seed) {
  PrototypeSet set;
  const SeedStream root(seed);
  for (const auto& spec : config.categories) {
    const double density = density_for_vertex_count(spec.raw_size, config.target_vertices);
    set.add(build_prototype(spec.name, spec.raw_size, density, config.feature_dim, root.fork(spec.name).seed()));
  }
  return set;
}

Eigen::Vector4d projected_rect(const Pose9D& pose, const CameraIntrinsics& K) {
  Eigen::Vector4d r(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity());
  for (const Vec3& c : box_corners(pose)) {
    if (c.z() <= 1e-9) throw Error(ErrorCode::kBehindCamera, "box corner behind the camera");
    const double u = K.fx * c.x() / c.z() + K.cx;
    const double v = K.fy * c.y() / c.z() + K.cy;
    r[0] = std::min(r[0], u);
    r[1] = std::min(r[1], v);
    r[2] = std::max(r[2], u);
    r[3] = std::max(r[3], v);
  }
  return r;
}

double rect_overlap(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  const double w = std::min(a[2], b[2]) - std::max(a[0], b[0]);
  const double h = std::min(a[3], b[3]) - std::max(a[1], b[1]);
  if (w <= 0 || h <= 0) return 0.0;
  const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
  const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
  return w * h / std::min(area_a, area_b);
}

SceneGroundTruth generate_scene(const SimConfig& config, const PrototypeSet& prototypes, SeedStream& rng) {
  config.validate();
  const auto& K = config.intrinsics;
  SceneGroundTruth scene;
  scene.intrinsics = K;
  const int count = rng.uniform_int(config.min_instances, config.max_instances);
  const int n_cat = static_cast<int>(config.categories.size());
  const int shared = rng.uniform_int(0, n_cat - 1);
  std::vector<Eigen::Vector4d> rects;
  for (int i = 0; i < count; ++i) {
    const auto& spec = config.categories[static_cast<size_t>(config.single_category ? shared : rng.uniform_int(0, n_cat - 1))];
    const auto& proto = prototypes.at(spec.name);
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
      const Mat3 R = haar_rotation(rng);
      const double z = rng.uniform(config.min_depth, config.max_depth);
      const double u = rng.uniform(0.0, K.width);
      const double v = rng.uniform(0.0, K.height);
      const Vec3 t(z * (u - K.cx) / K.fx, z * (v - K.cy) / K.fy, z);
      Vec3 d;
      for (int a = 0; a < 3; ++a) d[a] = rng.uniform(config.min_deformation, config.max_deformation);
      const double sigma = proto.mean_scale * rng.uniform(config.min_scale_factor, config.max_scale_factor);
      const Vec3 size = sigma * d.cwiseProduct(proto.mean_size).normalized();
      const Pose9D pose = Pose9D::make(spec.name, R, t, d, size);

      bool in_front = true;
      for (const Vec3& c : box_corners(pose)) in_front = in_front && c.z() > 1e-3;
      if (!in_front) continue;
      const Eigen::Vector4d rect = projected_rect(pose, K);
      if (rect[0] < 0 || rect[1] < 0 || rect[2] > K.width || rect[3] > K.height) continue;
      bool clear = true;
      if (!config.occlusion) {
        for (const auto& other : rects) clear = clear && rect_overlap(rect, other) <= config.max_overlap;
      }
      if (!clear) continue;
      scene.objects.push_back(pose);
      rects.push_back(rect);
      placed = true;
    }
    if (!placed) throw Error(ErrorCode::kPlacementFailure, "could not place instance " + std::to_string(i));
  }
  return scene;
}

SimulatedObservation synthesize_feature_maps(const SceneGroundTruth& scene, const PrototypeSet& prototypes,
                                             const SimConfig& config, SeedStream& rng) {
  config.validate();
  const CameraIntrinsics& K = config.intrinsics;
  const CameraIntrinsics Kc = K.downscaled(config.stride);
  const int dim = config.feature_dim;
  for (const auto& p : prototypes) {
    if (p.feature_dim() != dim) throw Error(ErrorCode::kShapeMismatch, "prototype feature dimension mismatch");
  }
  const double kappa = config.effective_kappa();

  SimulatedObservation obs;
  obs.intrinsics = K;
  obs.gt = scene;
  obs.gt.intrinsics = K;

  for (const ShapeVariant variant : {ShapeVariant::kMeanShape, ShapeVariant::kInstanceShape}) {
    FeatureMap map(Kc.width, Kc.height, config.stride, dim);
    std::vector<CellLabel> labels(static_cast<size_t>(map.num_cells()));
    const SceneMasks masks = render_prototype_masks(scene, prototypes, Kc, MultiObjectRule::kMaskOverlaps, variant);
    const auto visible = scene_visibility(scene, prototypes, variant, K);

    for (int cell = 0; cell < map.num_cells(); ++cell) {
      const auto p = static_cast<size_t>(cell);
      int owner = -1;
      for (size_t o = 0; o < masks.objects.size(); ++o) {
        if (masks.objects[o].data[p]) owner = static_cast<int>(o);
      }
      VecX feature;
      if (owner >= 0 && !visible[static_cast<size_t>(owner)].empty()) {
        Vec2 center = map.cell_center(cell);
        if (config.pixel_jitter > 0) center += config.pixel_jitter * Vec2(rng.normal(), rng.normal());
        const auto& vis = visible[static_cast<size_t>(owner)];
        size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < vis.size(); ++k) {
          const double d2 = (vis[k].pixel - center).squaredNorm();
          if (d2 < best_d2) {
            best_d2 = d2;
            best = k;
          }
        }
        const auto& proto = prototypes.at(scene.objects[static_cast<size_t>(owner)].category);
        labels[p].object = owner;
        labels[p].vertex = vis[best].index;
        feature = sample_vmf(proto.features.row(vis[best].index).transpose(), kappa, rng);
        if (rng.uniform() < config.outlier_rate) {
          labels[p].replaced = true;
          feature = uniform_unit_vector(dim, rng);
        }
      } else if (!masks.foreground.data[p] && config.distractor_rate > 0 && rng.uniform() < config.distractor_rate) {
        const auto& proto = prototypes[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(prototypes.size()) - 1))];
        const int v = rng.uniform_int(0, proto.num_vertices() - 1);
        feature = sample_vmf(proto.features.row(v).transpose(), kappa, rng);
      } else {
        feature = uniform_unit_vector(dim, rng);
      }
      map.features.row(cell) = feature.cast<float>().transpose();
      const double fg = masks.foreground.data[p] ? 1.0 : 0.0;
      const double noise = config.heatmap_sigma > 0 ? config.heatmap_sigma * rng.normal() : 0.0;
      map.heatmap.data[p] = static_cast<float>(std::clamp(fg + noise, 0.0, 1.0));
    }
    if (variant == ShapeVariant::kMeanShape) {
      obs.mean_scale_map = std::move(map);
      obs.mean_labels = std::move(labels);
    } else {
      obs.instance_scale_map = std::move(map);
      obs.instance_labels = std::move(labels);
    }
  }
  return obs;
}

void PipelineParams::validate() const {
  if (!(t1 >= 0 && t1 <= 1)) throw Error(ErrorCode::kInvalidArgument, "t1 must lie in [0, 1]");
  if (!(t2 >= -1 && t2 <= 1)) throw Error(ErrorCode::kInvalidArgument, "t2 must lie in [-1, 1]");
  solver.validate();
  refinement.validate();
}

PipelineOutput run_pipeline(const FeatureMap& mean_scale_map, const FeatureMap& instance_scale_map,
                            const CameraIntrinsics& K, const PrototypeSet& prototypes, const PipelineParams& params,
                            const SeedStream& rng) {
  params.validate();
  PipelineOutput out;
  out.mean_correspondences = match_correspondences(mean_scale_map, prototypes, params.t1, params.t2);
  out.hypotheses = multi_model_pnp(out.mean_correspondences, prototypes, K, params.solver, rng.fork("solver"));

  std::map<std::string, std::vector<Correspondence>> instance_corr;
  Mask foreground;
  if (params.refine) {
    for (auto& c : match_correspondences(instance_scale_map, prototypes, params.t1, params.t2)) {
      instance_corr[c.category].push_back(std::move(c));
    }
    foreground = Mask(instance_scale_map.width, instance_scale_map.height, 0);
    for (size_t p = 0; p < foreground.size(); ++p) {
      foreground.data[p] = instance_scale_map.heatmap.data[p] >= params.t1 ? 1 : 0;
    }
  }
  RefinementParams refinement = params.refinement;
  refinement.t2 = params.t2;

  for (const auto& hyp : out.hypotheses) {
    if (!(hyp.t.z() > 0)) continue;
    const auto& proto = prototypes.at(hyp.category);
    RefinementProblem problem;
    problem.intrinsics = K;
    problem.initial = hyp;
    problem.vertices = proto.mean_scale_vertices();
    const Pose9D rigid = Pose9D::make(hyp.category, nearest_rotation(hyp.R), hyp.t, Vec3::Ones(),
                                      bounding_box_size(problem.vertices));
    RefinedInstance refined;
    refined.pose = rigid;
    if (params.refine) {
      problem.correspondences = instance_corr[hyp.category];
      problem.mask = &foreground;
      for (int i : hyp.inliers) problem.category_level.push_back(out.mean_correspondences[static_cast<size_t>(i)]);
      refined = refine_instance(problem, refinement);
    }
    out.rigid.push_back(rigid);
    out.refined.push_back(refined.pose);
    out.details.push_back(std::move(refined));
  }
  return out;
}

PipelineOutput run_pipeline(const SimulatedObservation& observation, const PrototypeSet& prototypes,
                            const PipelineParams& params, const SeedStream& rng) {
  return run_pipeline(observation.mean_scale_map, observation.instance_scale_map, observation.intrinsics, prototypes,
                      params, rng);
}

}  // namespace meshpose
