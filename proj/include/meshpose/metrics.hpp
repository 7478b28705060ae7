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

// Scale-agnostic and absolute pose metrics, prediction to ground-truth
// matching and per-category aggregation.

#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "meshpose/geometry.hpp"

namespace meshpose {

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 size = Vec3::Ones();  // full extents

  static OrientedBox from(const Pose9D& pose);
  double volume() const { return size.prod(); }
  std::array<Vec3, 8> corners() const;
};

// Exact IoU by convex polytope clipping. Zero for degenerate boxes.
double iou3d(const OrientedBox& a, const OrientedBox& b);

// Rescales pred's (size, t) by gt.scale / pred.scale.
Pose9D scale_align(const Pose9D& pred, const Pose9D& gt);

struct SymmetryEntry {
  enum class Kind { kNone, kAxis };
  Kind kind = Kind::kNone;
  Vec3 axis = Vec3::UnitY();
};

struct SymmetrySpec {
  std::map<std::string, SymmetryEntry> entries;

  // bottle, bowl and can symmetric about y; everything else asymmetric.
  static SymmetrySpec standard();
  SymmetryEntry entry(const std::string& category) const;
};

// Degrees. Throws kInvalidRotation for inputs outside SO(3).
double rotation_error(const Mat3& R_pred, const Mat3& R_gt, const SymmetryEntry& symmetry);

// |t_pred - t_gt| / d_gt. Throws kInvalidSize for d_gt <= 0.
double translation_error_normalized(const Vec3& t_pred_aligned, const Vec3& t_gt, double d_gt);

// IoU of the scale-aligned prediction and the ground truth, both expressed
// in units of the ground-truth scale.
double normalized_iou(const Pose9D& pred, const Pose9D& gt);

struct MetricThresholds {
  std::array<double, 3> niou = {0.25, 0.50, 0.75};
  std::array<double, 2> degrees = {5.0, 10.0};
  std::array<double, 2> normalized_translation = {0.2, 0.5};
  std::array<double, 2> absolute_iou = {0.50, 0.75};
  std::array<double, 2> meters = {0.05, 0.10};

  void validate() const;
};

// Report columns, in order.
enum Metric : int {
  kNIoU25,
  kNIoU50,
  kNIoU75,
  kDeg5T02,
  kDeg5T05,
  kDeg10T02,
  kDeg10T05,
  kT02,
  kT05,
  kDeg5,
  kDeg10,
  kIoU50,
  kIoU75,
  kDeg5Cm5,
  kDeg5Cm10,
  kDeg10Cm5,
  kDeg10Cm10,
  kNumMetrics
};
std::array<std::string, kNumMetrics> metric_names(const MetricThresholds& thresholds);

struct MatchRecord {
  std::string category;
  int pred_index = -1;  // into the caller's prediction sequence
  int gt_index = -1;
  double niou = 0.0;
  double rotation_deg = 0.0;
  double translation_norm = 0.0;
  double absolute_iou = 0.0;
  double translation_m = 0.0;
  std::array<bool, kNumMetrics> hits{};
};

struct CategoryTally {
  int gt = 0;
  int false_positives = 0;
  std::array<int, kNumMetrics> hits{};

  CategoryTally& operator+=(const CategoryTally& other);
};

struct SceneEvaluation {
  std::map<std::string, CategoryTally> tallies;
  std::vector<MatchRecord> matches;
};

// Greedy one-to-one matching per category in descending NIoU; ties go to
// the smaller normalized translation error, then to the prediction's rank
// in a canonical ordering, so input order does not matter.
SceneEvaluation evaluate_scene(std::span<const Pose9D> predictions, const SceneGroundTruth& gt,
                               const SymmetrySpec& symmetry, const MetricThresholds& thresholds);

struct MetricsReport {
  std::array<std::string, kNumMetrics> columns;
  std::map<std::string, std::array<double, kNumMetrics>> per_category;  // percentages
  std::array<double, kNumMetrics> mean{};
  std::map<std::string, CategoryTally> tallies;

  std::string to_csv() const;
  std::string to_json(int indent = 2) const;
};

// hits / (gt + false positives) per category, in percent; mean over
// categories that have any ground truth or prediction.
MetricsReport aggregate_map(std::span<const SceneEvaluation> scenes, const MetricThresholds& thresholds);

// Empty when every looser threshold scores at least as high as its tighter
// counterpart; otherwise one message per violation.
std::vector<std::string> check_monotonicity(const MetricsReport& report);

}  // namespace meshpose
