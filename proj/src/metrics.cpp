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

#include "meshpose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <Eigen/Geometry>
#include <json.hpp>

namespace meshpose {
namespace {

constexpr double kPi = 3.14159265358979323846;

using Polygon = std::vector<Vec3>;
using Polyhedron = std::vector<Polygon>;

Polyhedron box_faces(const OrientedBox& b) {
  const auto c = b.corners();
  // Corner index bits: x = 1, y = 2, z = 4. Faces wound outward.
  static constexpr int kFaces[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                                       {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  Polyhedron out;
  for (const auto& f : kFaces) out.push_back({c[f[0]], c[f[1]], c[f[2]], c[f[3]]});
  return out;
}

// Keeps the part of `poly` with n.x <= offset and closes the cut.
Polyhedron clip(const Polyhedron& poly, const Vec3& n, double offset, double tol) {
  Polyhedron out;
  Polygon cap;
  bool face_on_plane = false;
  for (const auto& face : poly) {
    Polygon kept;
    bool all_on = true;
    const size_t m = face.size();
    for (size_t i = 0; i < m; ++i) {
      const Vec3& p = face[i];
      const Vec3& q = face[(i + 1) % m];
      const double sp = n.dot(p) - offset;
      const double sq = n.dot(q) - offset;
      if (std::abs(sp) > tol) all_on = false;
      if (sp <= tol) {
        kept.push_back(p);
        if (sp >= -tol) cap.push_back(p);
      }
      if ((sp < -tol && sq > tol) || (sp > tol && sq < -tol)) {
        const Vec3 x = p + (q - p) * (sp / (sp - sq));
        kept.push_back(x);
        cap.push_back(x);
      }
    }
    if (all_on) face_on_plane = true;
    if (kept.size() >= 3) out.push_back(std::move(kept));
  }
  if (!face_on_plane && cap.size() >= 3) {
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : cap) centroid += p;
    centroid /= static_cast<double>(cap.size());
    const Vec3 u = (std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).cross(n).normalized();
    const Vec3 v = n.cross(u);
    std::sort(cap.begin(), cap.end(), [&](const Vec3& a, const Vec3& b) {
      return std::atan2((a - centroid).dot(v), (a - centroid).dot(u)) <
             std::atan2((b - centroid).dot(v), (b - centroid).dot(u));
    });
    Polygon dedup;
    for (const auto& p : cap) {
      if (dedup.empty() || (p - dedup.back()).norm() > tol) dedup.push_back(p);
    }
    if (dedup.size() >= 2 && (dedup.front() - dedup.back()).norm() <= tol) dedup.pop_back();
    if (dedup.size() >= 3) out.push_back(std::move(dedup));
  }
  return out;
}

double polyhedron_volume(const Polyhedron& poly) {
  if (poly.size() < 4) return 0.0;
  Vec3 c = Vec3::Zero();
  size_t count = 0;
  for (const auto& f : poly) {
    for (const auto& p : f) {
      c += p;
      ++count;
    }
  }
  c /= static_cast<double>(count);
  double volume = 0.0;
  for (const auto& f : poly) {
    Vec3 area = Vec3::Zero();
    for (size_t i = 0; i < f.size(); ++i) area += f[i].cross(f[(i + 1) % f.size()]);
    const double a = 0.5 * area.norm();
    if (a <= 0) continue;
    volume += a * std::abs(area.normalized().dot(f[0] - c)) / 3.0;
  }
  return volume;
}

bool degenerate(const OrientedBox& b) { return !(b.size.array() > 0).all() || !b.size.allFinite(); }

void check_rotation(const Mat3& R) {
  if (!is_rotation(R, 1e-6)) throw Error(ErrorCode::kInvalidRotation, "rotation error input is not in SO(3)");
}

bool canonical_key_less(const Pose9D& a, const Pose9D& b) {
  const auto qa = rotation_to_quaternion(a.R);
  const auto qb = rotation_to_quaternion(b.R);
  std::array<double, 10> ka{a.t.x(), a.t.y(), a.t.z(), a.size.x(), a.size.y(), a.size.z(), qa[0], qa[1], qa[2], qa[3]};
  std::array<double, 10> kb{b.t.x(), b.t.y(), b.t.z(), b.size.x(), b.size.y(), b.size.z(), qb[0], qb[1], qb[2], qb[3]};
  return ka < kb;
}

}  // namespace

OrientedBox OrientedBox::from(const Pose9D& pose) { return {pose.t, pose.R, pose.size}; }

std::array<Vec3, 8> OrientedBox::corners() const {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 sign((i & 1) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5, (i & 4) ? 0.5 : -0.5);
    out[static_cast<size_t>(i)] = center + rotation * sign.cwiseProduct(size);
  }
  return out;
}

double iou3d(const OrientedBox& a, const OrientedBox& b) {
  if (degenerate(a) || degenerate(b)) return 0.0;
  const double tol = 1e-12 * std::max({a.size.maxCoeff(), b.size.maxCoeff(), a.center.norm(), b.center.norm(), 1.0});
  Polyhedron poly = box_faces(a);
  for (int axis = 0; axis < 3 && !poly.empty(); ++axis) {
    const Vec3 n = b.rotation.col(axis);
    const double half = 0.5 * b.size[axis];
    const double c = n.dot(b.center);
    poly = clip(poly, n, c + half, tol);
    if (!poly.empty()) poly = clip(poly, -n, -(c - half), tol);
  }
  const double inter = std::min({polyhedron_volume(poly), a.volume(), b.volume()});
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

Pose9D scale_align(const Pose9D& pred, const Pose9D& gt) {
  if (!(pred.scale > 0) || !std::isfinite(pred.scale)) throw Error(ErrorCode::kInvalidScale, "prediction scale must be positive");
  const double alpha = gt.scale / pred.scale;
  Pose9D out = pred;
  out.size = pred.size * alpha;
  out.t = pred.t * alpha;
  out.scale = out.size.norm();
  return out;
}

SymmetrySpec SymmetrySpec::standard() {
  SymmetrySpec s;
  for (const char* c : {"bottle", "bowl", "can"}) s.entries[c] = {SymmetryEntry::Kind::kAxis, Vec3::UnitY()};
  for (const char* c : {"camera", "laptop", "mug"}) s.entries[c] = {};
  return s;
}

SymmetryEntry SymmetrySpec::entry(const std::string& category) const {
  auto it = entries.find(category);
  return it == entries.end() ? SymmetryEntry{} : it->second;
}

double rotation_error(const Mat3& R_pred, const Mat3& R_gt, const SymmetryEntry& symmetry) {
  check_rotation(R_pred);
  check_rotation(R_gt);
  if (symmetry.kind == SymmetryEntry::Kind::kNone) return rotation_angle(R_pred, R_gt) * 180.0 / kPi;
  const Vec3 a = symmetry.axis.normalized();
  const Vec3 p = R_pred * a;
  const Vec3 g = R_gt * a;
  return std::atan2(p.cross(g).norm(), p.dot(g)) * 180.0 / kPi;
}

double translation_error_normalized(const Vec3& t_pred_aligned, const Vec3& t_gt, double d_gt) {
  if (!(d_gt > 0)) throw Error(ErrorCode::kInvalidSize, "ground-truth scale must be positive");
  return (t_pred_aligned - t_gt).norm() / d_gt;
}

double normalized_iou(const Pose9D& pred, const Pose9D& gt) {
  const Pose9D aligned = scale_align(pred, gt);
  const double inv = 1.0 / gt.scale;
  return iou3d({aligned.t * inv, aligned.R, aligned.size * inv}, {gt.t * inv, gt.R, gt.size * inv});
}

void MetricThresholds::validate() const {
  auto ascending = [](auto& arr) { return std::is_sorted(arr.begin(), arr.end()) && arr.front() > 0; };
  if (!ascending(niou) || !ascending(degrees) || !ascending(normalized_translation) || !ascending(absolute_iou) ||
      !ascending(meters)) {
    throw Error(ErrorCode::kInvalidArgument, "metric thresholds must be positive and ascending");
  }
}

std::array<std::string, kNumMetrics> metric_names(const MetricThresholds& th) {
  auto g = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return std::string(buf);
  };
  auto pct = [&](double v) { return g(v * 100.0); };
  auto deg = [&](double v) { return g(v) + "°"; };
  auto d = [&](double v) { return g(v) + "d"; };
  auto cm = [&](double v) { return g(v * 100.0) + "cm"; };
  return {"NIoU" + pct(th.niou[0]),
          "NIoU" + pct(th.niou[1]),
          "NIoU" + pct(th.niou[2]),
          deg(th.degrees[0]) + d(th.normalized_translation[0]),
          deg(th.degrees[0]) + d(th.normalized_translation[1]),
          deg(th.degrees[1]) + d(th.normalized_translation[0]),
          deg(th.degrees[1]) + d(th.normalized_translation[1]),
          d(th.normalized_translation[0]),
          d(th.normalized_translation[1]),
          deg(th.degrees[0]),
          deg(th.degrees[1]),
          "IoU" + pct(th.absolute_iou[0]),
          "IoU" + pct(th.absolute_iou[1]),
          deg(th.degrees[0]) + cm(th.meters[0]),
          deg(th.degrees[0]) + cm(th.meters[1]),
          deg(th.degrees[1]) + cm(th.meters[0]),
          deg(th.degrees[1]) + cm(th.meters[1])};
}

CategoryTally& CategoryTally::operator+=(const CategoryTally& other) {
  gt += other.gt;
  false_positives += other.false_positives;
  for (int i = 0; i < kNumMetrics; ++i) hits[static_cast<size_t>(i)] += other.hits[static_cast<size_t>(i)];
  return *this;
}

SceneEvaluation evaluate_scene(std::span<const Pose9D> predictions, const SceneGroundTruth& gt,
                               const SymmetrySpec& symmetry, const MetricThresholds& th) {
  th.validate();
  SceneEvaluation out;
  std::map<std::string, std::vector<int>> preds_by_cat, gts_by_cat;
  for (size_t i = 0; i < predictions.size(); ++i) preds_by_cat[predictions[i].category].push_back(static_cast<int>(i));
  for (size_t i = 0; i < gt.objects.size(); ++i) gts_by_cat[gt.objects[i].category].push_back(static_cast<int>(i));

  std::vector<std::string> categories;
  for (const auto& [c, _] : preds_by_cat) categories.push_back(c);
  for (const auto& [c, _] : gts_by_cat) categories.push_back(c);
  std::sort(categories.begin(), categories.end());
  categories.erase(std::unique(categories.begin(), categories.end()), categories.end());

  for (const auto& category : categories) {
    std::vector<int> preds = preds_by_cat[category];
    const std::vector<int>& gts = gts_by_cat[category];
    std::stable_sort(preds.begin(), preds.end(), [&](int a, int b) {
      return canonical_key_less(predictions[static_cast<size_t>(a)], predictions[static_cast<size_t>(b)]);
    });

    struct Candidate {
      double niou, tnorm;
      size_t rank, g;
    };
    std::vector<Candidate> candidates;
    for (size_t r = 0; r < preds.size(); ++r) {
      const Pose9D& p = predictions[static_cast<size_t>(preds[r])];
      for (size_t g = 0; g < gts.size(); ++g) {
        const Pose9D& q = gt.objects[static_cast<size_t>(gts[g])];
        const Pose9D aligned = scale_align(p, q);
        candidates.push_back({normalized_iou(p, q), translation_error_normalized(aligned.t, q.t, q.scale), r, g});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.niou != b.niou) return a.niou > b.niou;
      if (a.tnorm != b.tnorm) return a.tnorm < b.tnorm;
      if (a.rank != b.rank) return a.rank < b.rank;
      return a.g < b.g;
    });

    CategoryTally& tally = out.tallies[category];
    tally.gt = static_cast<int>(gts.size());
    std::vector<char> pred_used(preds.size(), 0), gt_used(gts.size(), 0);
    int matched = 0;
    for (const auto& c : candidates) {
      if (pred_used[c.rank] || gt_used[c.g]) continue;
      pred_used[c.rank] = gt_used[c.g] = 1;
      ++matched;
      const Pose9D& p = predictions[static_cast<size_t>(preds[c.rank])];
      const Pose9D& q = gt.objects[static_cast<size_t>(gts[c.g])];
      MatchRecord m;
      m.category = category;
      m.pred_index = preds[c.rank];
      m.gt_index = gts[c.g];
      m.niou = c.niou;
      m.translation_norm = c.tnorm;
      m.rotation_deg = rotation_error(p.R, q.R, symmetry.entry(category));
      m.absolute_iou = iou3d(OrientedBox::from(p), OrientedBox::from(q));
      m.translation_m = (p.t - q.t).norm();
      auto& h = m.hits;
      for (int k = 0; k < 3; ++k) h[static_cast<size_t>(kNIoU25 + k)] = m.niou >= th.niou[static_cast<size_t>(k)];
      const bool r5 = m.rotation_deg <= th.degrees[0], r10 = m.rotation_deg <= th.degrees[1];
      const bool t02 = m.translation_norm <= th.normalized_translation[0];
      const bool t05 = m.translation_norm <= th.normalized_translation[1];
      const bool c5 = m.translation_m <= th.meters[0], c10 = m.translation_m <= th.meters[1];
      h[kDeg5T02] = r5 && t02;
      h[kDeg5T05] = r5 && t05;
      h[kDeg10T02] = r10 && t02;
      h[kDeg10T05] = r10 && t05;
      h[kT02] = t02;
      h[kT05] = t05;
      h[kDeg5] = r5;
      h[kDeg10] = r10;
      h[kIoU50] = m.absolute_iou >= th.absolute_iou[0];
      h[kIoU75] = m.absolute_iou >= th.absolute_iou[1];
      h[kDeg5Cm5] = r5 && c5;
      h[kDeg5Cm10] = r5 && c10;
      h[kDeg10Cm5] = r10 && c5;
      h[kDeg10Cm10] = r10 && c10;
      for (int k = 0; k < kNumMetrics; ++k) tally.hits[static_cast<size_t>(k)] += h[static_cast<size_t>(k)] ? 1 : 0;
      out.matches.push_back(std::move(m));
    }
    tally.false_positives = static_cast<int>(preds.size()) - matched;
  }
  std::sort(out.matches.begin(), out.matches.end(),
            [](const MatchRecord& a, const MatchRecord& b) { return a.gt_index < b.gt_index; });
  return out;
}

MetricsReport aggregate_map(std::span<const SceneEvaluation> scenes, const MetricThresholds& thresholds) {
  if (scenes.empty()) throw Error(ErrorCode::kEmptyInput, "aggregation needs at least one scene");
  MetricsReport report;
  report.columns = metric_names(thresholds);
  for (const auto& scene : scenes) {
    for (const auto& [category, tally] : scene.tallies) report.tallies[category] += tally;
  }
  int counted = 0;
  for (const auto& [category, tally] : report.tallies) {
    const int denom = tally.gt + tally.false_positives;
    if (denom == 0) continue;
    auto& row = report.per_category[category];
    for (int k = 0; k < kNumMetrics; ++k) {
      row[static_cast<size_t>(k)] = 100.0 * tally.hits[static_cast<size_t>(k)] / denom;
      report.mean[static_cast<size_t>(k)] += row[static_cast<size_t>(k)];
    }
    ++counted;
  }
  if (counted > 0) {
    for (double& v : report.mean) v /= counted;
  }
  return report;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out << "category";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  auto row = [&](const std::string& name, const std::array<double, kNumMetrics>& values) {
    out << name;
    char buf[32];
    for (double v : values) {
      std::snprintf(buf, sizeof(buf), ",%.4f", v);
      out << buf;
    }
    out << '\n';
  };
  for (const auto& [category, values] : per_category) row(category, values);
  row("mean", mean);
  return out.str();
}

std::string MetricsReport::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["columns"] = columns;
  auto values = [&](const std::array<double, kNumMetrics>& v) {
    nlohmann::ordered_json o;
    for (int k = 0; k < kNumMetrics; ++k) o[columns[static_cast<size_t>(k)]] = v[static_cast<size_t>(k)];
    return o;
  };
  nlohmann::ordered_json cats = nlohmann::ordered_json::object();
  for (const auto& [category, v] : per_category) {
    auto o = values(v);
    const auto& t = tallies.at(category);
    o["gt"] = t.gt;
    o["false_positives"] = t.false_positives;
    cats[category] = std::move(o);
  }
  j["per_category"] = std::move(cats);
  j["mean"] = values(mean);
  return j.dump(indent);
}

std::vector<std::string> check_monotonicity(const MetricsReport& report) {
  static constexpr std::pair<int, int> kPairs[] = {
      {kNIoU25, kNIoU50}, {kNIoU50, kNIoU75},   {kDeg10, kDeg5},         {kDeg10T02, kDeg5T02},
      {kDeg10T05, kDeg5T05}, {kT05, kT02},      {kDeg5T05, kDeg5T02},    {kDeg10T05, kDeg10T02},
      {kDeg5, kDeg5T02},  {kT02, kDeg5T02},     {kDeg10, kDeg10T05},     {kT05, kDeg10T05},
      {kIoU50, kIoU75},   {kDeg5Cm10, kDeg5Cm5}, {kDeg10Cm5, kDeg5Cm5},  {kDeg10Cm10, kDeg10Cm5},
      {kDeg10Cm10, kDeg5Cm10}};
  std::vector<std::string> out;
  auto check = [&](const std::string& name, const std::array<double, kNumMetrics>& v) {
    for (const auto& [loose, tight] : kPairs) {
      if (v[static_cast<size_t>(loose)] + 1e-9 < v[static_cast<size_t>(tight)]) {
        out.push_back(name + ": " + report.columns[static_cast<size_t>(loose)] + " < " +
                      report.columns[static_cast<size_t>(tight)]);
      }
    }
  };
  for (const auto& [category, v] : report.per_category) check(category, v);
  check("mean", report.mean);
  return out;
}

}  // namespace meshpose
