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


#include <cmath>

#include "meshpose/scene_sim.hpp"
#include "test_util.hpp"

namespace meshpose {
namespace {

const PrototypeSet& prototypes() {
  static const PrototypeSet p = make_prototypes(SimConfig{}, 1);
  return p;
}

bool same_scene(const SceneGroundTruth& a, const SceneGroundTruth& b) {
  if (a.objects.size() != b.objects.size()) return false;
  for (size_t i = 0; i < a.objects.size(); ++i) {
    const auto &x = a.objects[i], &y = b.objects[i];
    if (x.category != y.category || x.R != y.R || x.t != y.t || x.deformation != y.deformation || x.size != y.size) {
      return false;
    }
  }
  return true;
}

TEST_CASE("generate_scene is deterministic under a fixed seed") {
  const SimConfig cfg;
  SeedStream a(42), b(42), c(43);
  const auto s1 = generate_scene(cfg, prototypes(), a);
  const auto s2 = generate_scene(cfg, prototypes(), b);
  const auto s3 = generate_scene(cfg, prototypes(), c);
  CHECK(same_scene(s1, s2));
  CHECK(!same_scene(s1, s3));
}

TEST_CASE("scene rotations are Haar-uniform") {
  SimConfig cfg;
  cfg.min_instances = cfg.max_instances = 1;
  SeedStream rng(1);
  Vec3 sum = Vec3::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += generate_scene(cfg, prototypes(), rng).objects[0].R.col(2);
  CHECK((sum / n).norm() < 0.02);
}

TEST_CASE("sampled poses respect the configured ranges") {
  SimConfig cfg;
  SeedStream rng(2);
  for (int i = 0; i < 500; ++i) {
    const auto s = generate_scene(cfg, prototypes(), rng);
    CHECK(static_cast<int>(s.objects.size()) >= cfg.min_instances);
    CHECK(static_cast<int>(s.objects.size()) <= cfg.max_instances);
    for (const auto& o : s.objects) {
      CHECK(o.deformation.minCoeff() >= cfg.min_deformation);
      CHECK(o.deformation.maxCoeff() <= cfg.max_deformation);
      CHECK(o.t.z() >= cfg.min_depth);
      CHECK(o.t.z() <= cfg.max_depth);
      const auto r = projected_rect(o, cfg.intrinsics);
      CHECK(r[0] >= 0.0);
      CHECK(r[1] >= 0.0);
      CHECK(r[2] <= cfg.intrinsics.width);
      CHECK(r[3] <= cfg.intrinsics.height);
    }
    for (size_t a = 0; a < s.objects.size(); ++a) {
      for (size_t b = a + 1; b < s.objects.size(); ++b) {
        CHECK(rect_overlap(projected_rect(s.objects[a], cfg.intrinsics), projected_rect(s.objects[b], cfg.intrinsics)) <=
              cfg.max_overlap);
      }
    }
  }
}

TEST_CASE("impossible placements raise a placement error") {
  SimConfig cfg;
  cfg.min_instances = cfg.max_instances = 30;
  cfg.max_overlap = 0.0;
  SeedStream rng(3);
  testing::check_error([&] { generate_scene(cfg, prototypes(), rng); }, ErrorCode::kPlacementFailure);
}

TEST_CASE("noiseless features point at the true vertex") {
  SimConfig cfg;
  cfg.kappa_sim = 1e6;
  cfg.kappa_mode = KappaMode::kRaw;
  cfg.heatmap_sigma = 0.0;
  SeedStream rng(4);
  int checked = 0;
  for (int s = 0; s < 5; ++s) {
    const auto scene = generate_scene(cfg, prototypes(), rng);
    const auto obs = synthesize_feature_maps(scene, prototypes(), cfg, rng);
    for (int cell = 0; cell < obs.mean_scale_map.num_cells(); ++cell) {
      const auto& label = obs.mean_labels[static_cast<size_t>(cell)];
      if (label.object < 0) continue;
      const auto& p = prototypes().at(scene.objects[static_cast<size_t>(label.object)].category);
      const VecX sims = p.features * obs.mean_scale_map.features.row(cell).transpose().cast<double>();
      Eigen::Index best;
      sims.maxCoeff(&best);
      CHECK(best == label.vertex);
      CHECK(obs.mean_scale_map.heatmap.data[static_cast<size_t>(cell)] == 1.0f);
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("outlier replacement frequency matches the configured rate") {
  SimConfig cfg;
  cfg.outlier_rate = 0.3;
  SeedStream rng(5);
  long covered = 0, replaced = 0;
  while (covered < 20000) {
    const auto scene = generate_scene(cfg, prototypes(), rng);
    const auto obs = synthesize_feature_maps(scene, prototypes(), cfg, rng);
    for (const auto& l : obs.instance_labels) {
      if (l.object < 0) continue;
      ++covered;
      replaced += l.replaced ? 1 : 0;
    }
  }
  CHECK(std::abs(static_cast<double>(replaced) / covered - 0.3) < 0.02);
}

TEST_CASE("identity deformation gives identical labels in both maps") {
  SimConfig cfg;
  cfg.min_deformation = cfg.max_deformation = 1.0;
  SeedStream rng(6);
  for (int s = 0; s < 5; ++s) {
    const auto scene = generate_scene(cfg, prototypes(), rng);
    const auto obs = synthesize_feature_maps(scene, prototypes(), cfg, rng);
    REQUIRE(obs.mean_labels.size() == obs.instance_labels.size());
    for (size_t i = 0; i < obs.mean_labels.size(); ++i) {
      CHECK(obs.mean_labels[i].object == obs.instance_labels[i].object);
      CHECK(obs.mean_labels[i].vertex == obs.instance_labels[i].vertex);
    }
  }
}

TEST_CASE("both maps share resolution and hold valid features") {
  const SimConfig cfg;
  SeedStream rng(7);
  const auto obs = synthesize_feature_maps(generate_scene(cfg, prototypes(), rng), prototypes(), cfg, rng);
  CHECK(obs.mean_scale_map.width == cfg.intrinsics.width / cfg.stride);
  CHECK(obs.mean_scale_map.height == cfg.intrinsics.height / cfg.stride);
  CHECK(obs.instance_scale_map.width == obs.mean_scale_map.width);
  CHECK(obs.instance_scale_map.dim() == cfg.feature_dim);
  CHECK_NOTHROW(obs.mean_scale_map.validate());
  CHECK_NOTHROW(obs.instance_scale_map.validate());
}

TEST_CASE("background-only scenes produce almost no detections") {
  const SimConfig cfg;
  const PipelineParams params;
  int clean = 0;
  for (int s = 0; s < 100; ++s) {
    SeedStream rng(1000 + s);
    SceneGroundTruth empty;
    empty.intrinsics = cfg.intrinsics;
    const auto obs = synthesize_feature_maps(empty, prototypes(), cfg, rng);
    if (run_pipeline(obs, prototypes(), params, rng.fork("pipeline")).refined.empty()) ++clean;
  }
  CHECK(clean >= 95);
}

// Accuracy thresholds for this regime are checked by the acceptance binary.
TEST_CASE("single noiseless object is detected once") {
  SimConfig cfg;
  cfg.min_instances = cfg.max_instances = 1;
  cfg.kappa_sim = 1e6;
  cfg.kappa_mode = KappaMode::kRaw;
  cfg.heatmap_sigma = 0.0;
  const PipelineParams params;
  for (int s = 0; s < 10; ++s) {
    SeedStream rng(2000 + s);
    const auto scene = generate_scene(cfg, prototypes(), rng);
    const auto obs = synthesize_feature_maps(scene, prototypes(), cfg, rng);
    const auto out = run_pipeline(obs, prototypes(), params, rng.fork("pipeline"));
    REQUIRE(out.refined.size() == 1);
    CHECK(out.refined[0].category == scene.objects[0].category);
    CHECK(out.details[0].refined);
  }
}

TEST_CASE("two overlapping same-category instances yield two poses") {
  SimConfig cfg;
  cfg.single_category = true;
  cfg.min_instances = cfg.max_instances = 2;
  cfg.max_overlap = 0.4;
  cfg.outlier_rate = 0.1;
  cfg.pixel_jitter = 0.5;
  const PipelineParams params;
  int correct = 0;
  const int n = 20;
  for (int s = 0; s < n; ++s) {
    SeedStream rng(3000 + s);
    const auto scene = generate_scene(cfg, prototypes(), rng);
    const auto obs = synthesize_feature_maps(scene, prototypes(), cfg, rng);
    if (run_pipeline(obs, prototypes(), params, rng.fork("pipeline")).refined.size() == 2) ++correct;
  }
  CHECK(correct >= 18);
}

TEST_CASE("pipeline is deterministic and never reads ground truth") {
  const SimConfig cfg;
  const PipelineParams params;
  SeedStream rng(8);
  const auto scene = generate_scene(cfg, prototypes(), rng);
  const auto obs = synthesize_feature_maps(scene, prototypes(), cfg, rng);
  const auto a = run_pipeline(obs, prototypes(), params, SeedStream(9));
  SimulatedObservation stripped = obs;
  stripped.gt = SceneGroundTruth{};
  stripped.mean_labels.clear();
  stripped.instance_labels.clear();
  const auto b = run_pipeline(stripped, prototypes(), params, SeedStream(9));
  const auto c = run_pipeline(obs.mean_scale_map, obs.instance_scale_map, obs.intrinsics, prototypes(), params,
                              SeedStream(9));
  REQUIRE(!a.refined.empty());
  for (const auto* other : {&b, &c}) {
    REQUIRE(other->refined.size() == a.refined.size());
    for (size_t i = 0; i < a.refined.size(); ++i) {
      CHECK(other->refined[i].R == a.refined[i].R);
      CHECK(other->refined[i].t == a.refined[i].t);
      CHECK(other->refined[i].deformation == a.refined[i].deformation);
    }
  }
}

}  // namespace
}  // namespace meshpose
