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

#include "meshpose/feature_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace meshpose {

FeatureMap::FeatureMap(int w, int h, int s, int dim)
    : width(w), height(h), stride(s), features(static_cast<Eigen::Index>(w) * h, dim), heatmap(w, h, 0.0f) {
  features.setZero();
}

Vec2 FeatureMap::cell_center(int cell) const {
  const int x = cell % width;
  const int y = cell / width;
  return {stride * (x + 0.5), stride * (y + 0.5)};
}

int FeatureMap::cell_at(const Vec2& pixel) const {
  const int x = static_cast<int>(std::floor(pixel.x() / stride));
  const int y = static_cast<int>(std::floor(pixel.y() / stride));
  if (x < 0 || y < 0 || x >= width || y >= height) return -1;
  return y * width + x;
}

void FeatureMap::validate() const {
  if (features.rows() != static_cast<Eigen::Index>(width) * height || heatmap.width != width ||
      heatmap.height != height) {
    throw Error(ErrorCode::kShapeMismatch, "feature map grid sizes disagree");
  }
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const double n = features.row(r).cast<double>().norm();
    if (std::abs(n - 1.0) > 1e-6) throw Error(ErrorCode::kNormalization, "feature map entry is not unit-norm");
  }
  for (float h : heatmap.data) {
    if (!(h >= 0.0f && h <= 1.0f)) throw Error(ErrorCode::kInvalidArgument, "heatmap value outside [0, 1]");
  }
}

FeatureBank FeatureBank::from(const PrototypeSet& prototypes) {
  FeatureBank bank;
  Eigen::Index rows = 0;
  int dim = -1;
  for (const auto& p : prototypes) {
    if (dim >= 0 && p.feature_dim() != dim) throw Error(ErrorCode::kShapeMismatch, "feature dimensions differ");
    dim = p.feature_dim();
    bank.categories.push_back(p.category);
    bank.offsets.push_back(static_cast<int>(rows));
    rows += p.num_vertices();
  }
  bank.features.resize(rows, std::max(dim, 0));
  for (size_t c = 0; c < prototypes.size(); ++c) {
    const auto& p = prototypes[c];
    bank.features.middleRows(bank.offsets[c], p.num_vertices()) = p.features;
  }
  return bank;
}

int FeatureBank::offset(const std::string& category) const {
  for (size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == category) return offsets[i];
  }
  throw Error(ErrorCode::kMissingPrototype, "category '" + category + "' not in feature bank");
}

void FeatureBank::store(PrototypeSet& prototypes) const {
  std::vector<CategoryPrototype> updated(prototypes.begin(), prototypes.end());
  for (auto& p : updated) p.features = features.middleRows(offset(p.category), p.num_vertices());
  prototypes = PrototypeSet(std::move(updated));
}

int AnnotationSet::num_visible() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.visible; }));
}

AnnotationSet build_annotation_set(const RasterResult& raster, const FeatureMap& map, int bank_offset,
                                   const MatX& bank, const Mask* object_mask) {
  AnnotationSet out;
  out.entries.reserve(raster.vertices.size());
  for (const auto& v : raster.vertices) {
    AnnotationEntry e;
    e.bank_index = bank_offset + v.vertex_index;
    const int cell = map.cell_at(v.pixel);
    bool visible = v.visible && cell >= 0;
    if (visible && object_mask != nullptr) visible = object_mask->data[static_cast<size_t>(cell)] != 0;
    e.visible = visible;
    if (cell >= 0) {
      e.pixel_feature = map.features.row(cell).cast<double>().transpose();
      e.pixel_feature.normalize();
    } else {
      e.pixel_feature = bank.row(e.bank_index).transpose();
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

double vmf_log_likelihood(const VecX& f, const VecX& theta, double kappa) {
  if (f.size() != theta.size()) throw Error(ErrorCode::kShapeMismatch, "feature dimensions differ");
  if (std::abs(f.norm() - 1.0) > 1e-6 || std::abs(theta.norm() - 1.0) > 1e-6) {
    throw Error(ErrorCode::kNormalization, "vMF inputs must be unit vectors");
  }
  return kappa * f.dot(theta);
}

VecX uniform_unit_vector(int dim, SeedStream& rng) {
  VecX v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  } while (v.norm() < 1e-12);
  return v.normalized();
}

VecX sample_vmf(const VecX& mean, double kappa, SeedStream& rng) {
  if (!(kappa >= 0) || !std::isfinite(kappa)) throw Error(ErrorCode::kInvalidConcentration, "kappa must be >= 0");
  if (std::abs(mean.norm() - 1.0) > 1e-6) throw Error(ErrorCode::kNormalization, "vMF mean must be a unit vector");
  const auto dim = static_cast<int>(mean.size());
  if (dim < 2) throw Error(ErrorCode::kInvalidArgument, "vMF sampling needs dimension >= 2");

  // Wood (1994): rejection sampling of w = x.mean, then a uniform tangent.
  const double dm1 = dim - 1.0;
  const double b = dm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + dm1 * std::log1p(-x0 * x0);
  std::gamma_distribution<double> gamma(dm1 / 2.0, 1.0);
  double w = 0.0;
  for (;;) {
    const double ga = gamma(rng.engine());
    const double gb = gamma(rng.engine());
    const double z = ga / (ga + gb);
    w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = rng.uniform();
    if (kappa * w + dm1 * std::log1p(-x0 * w) - c >= std::log(u)) break;
  }

  VecX v(dim);
  double vn = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    v -= v.dot(mean) * mean;
    vn = v.norm();
  } while (vn < 1e-12);
  v /= vn;
  VecX x = w * mean + std::sqrt(std::max(0.0, 1.0 - w * w)) * v;
  return x.normalized();
}

namespace {

// Loss of one entry and the softmax weights over the bank.
double entry_loss(const VecX& f, int positive, const MatX& bank, double kappa, VecX* softmax) {
  const VecX logits = kappa * (bank * f);
  const double m = logits.maxCoeff();
  const VecX e = (logits.array() - m).exp().matrix();
  const double z = e.sum();
  if (softmax != nullptr) *softmax = e / z;
  return -(logits[positive] - m) + std::log(z);
}

void check_annotations(const AnnotationSet& annotations, const MatX& bank) {
  if (annotations.num_visible() == 0) throw Error(ErrorCode::kUndefinedLoss, "no visible vertices");
  for (const auto& e : annotations.entries) {
    if (e.bank_index < 0 || e.bank_index >= bank.rows()) {
      throw Error(ErrorCode::kInvalidArgument, "annotation vertex outside the feature bank");
    }
    if (e.visible && e.pixel_feature.size() != bank.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "pixel feature dimension differs from the bank");
    }
  }
}

}  // namespace

double contrastive_loss(const AnnotationSet& annotations, const MatX& bank, double kappa) {
  check_annotations(annotations, bank);
  double loss = 0.0;
  for (const auto& e : annotations.entries) {
    if (e.visible) loss += entry_loss(e.pixel_feature, e.bank_index, bank, kappa, nullptr);
  }
  return loss;
}

ContrastiveGradient contrastive_loss_grad(const AnnotationSet& annotations, const MatX& bank, double kappa) {
  check_annotations(annotations, bank);
  ContrastiveGradient g;
  g.d_pixel = MatX::Zero(static_cast<Eigen::Index>(annotations.entries.size()), bank.cols());
  g.d_bank = MatX::Zero(bank.rows(), bank.cols());
  VecX p;
  for (size_t i = 0; i < annotations.entries.size(); ++i) {
    const auto& e = annotations.entries[i];
    if (!e.visible) continue;
    g.loss += entry_loss(e.pixel_feature, e.bank_index, bank, kappa, &p);
    // dl/df = kappa * (sum_j p_j th_j - th_pos); dl/dth_j = kappa * (p_j - [j == pos]) f
    p[e.bank_index] -= 1.0;
    g.d_pixel.row(static_cast<Eigen::Index>(i)) = kappa * (bank.transpose() * p).transpose();
    g.d_bank.noalias() += kappa * p * e.pixel_feature.transpose();
  }
  return g;
}

namespace {

LossBreakdown training_loss_impl(std::span<const AnnotationSet> mean_maps,
                                 std::span<const AnnotationSet> deformed_maps, const MatX& bank, double kappa,
                                 MatX* d_bank) {
  if (mean_maps.size() != deformed_maps.size()) {
    throw Error(ErrorCode::kInconsistentAnnotation, "object counts differ between the two feature maps");
  }
  if (mean_maps.empty()) throw Error(ErrorCode::kEmptyInput, "no objects");
  LossBreakdown out;
  if (d_bank != nullptr) *d_bank = MatX::Zero(bank.rows(), bank.cols());
  const double weight = 1.0 / (2.0 * static_cast<double>(mean_maps.size()));
  for (size_t i = 0; i < mean_maps.size(); ++i) {
    double pair = 0.0;
    for (const AnnotationSet* set : {&mean_maps[i], &deformed_maps[i]}) {
      if (set->num_visible() == 0) continue;
      if (d_bank != nullptr) {
        auto g = contrastive_loss_grad(*set, bank, kappa);
        pair += g.loss;
        *d_bank += weight * g.d_bank;
      } else {
        pair += contrastive_loss(*set, bank, kappa);
      }
    }
    out.per_object.push_back(pair / 2.0);
  }
  double sum = 0.0;
  for (double v : out.per_object) sum += v;
  out.total = sum / static_cast<double>(out.per_object.size());
  return out;
}

}  // namespace

LossBreakdown training_loss(std::span<const AnnotationSet> mean_maps, std::span<const AnnotationSet> deformed_maps,
                            const MatX& bank, double kappa) {
  return training_loss_impl(mean_maps, deformed_maps, bank, kappa, nullptr);
}

LossBreakdown training_loss_grad(std::span<const AnnotationSet> mean_maps,
                                 std::span<const AnnotationSet> deformed_maps, const MatX& bank, double kappa,
                                 MatX* d_bank) {
  return training_loss_impl(mean_maps, deformed_maps, bank, kappa, d_bank);
}

double dice_loss(const Grid<double>& predicted, const Mask& target) {
  if (predicted.width != target.width || predicted.height != target.height) {
    throw Error(ErrorCode::kShapeMismatch, "dice loss grids differ in shape");
  }
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const double g = target.data[i] ? 1.0 : 0.0;
    inter += predicted.data[i] * g;
    sp += predicted.data[i];
    sg += g;
  }
  return 1.0 - 2.0 * inter / (sp + sg + kDiceEpsilon);
}

double mask_loss(const Grid<double>& instance_pred, const Mask& instance_gt, const Grid<double>& mean_pred,
                 const Mask& mean_gt) {
  return 0.5 * (dice_loss(instance_pred, instance_gt) + dice_loss(mean_pred, mean_gt));
}

Grid<double> minmax_normalize(const Grid<double>& values) {
  if (values.size() == 0) throw Error(ErrorCode::kEmptyInput, "min-max of an empty grid");
  const auto [lo, hi] = std::minmax_element(values.data.begin(), values.data.end());
  Grid<double> out(values.width, values.height, 0.0);
  const double range = *hi - *lo;
  if (range <= 0) return out;
  for (size_t i = 0; i < values.size(); ++i) out.data[i] = (values.data[i] - *lo) / range;
  return out;
}

std::vector<Correspondence> match_correspondences(const FeatureMap& map, const PrototypeSet& prototypes, double t1,
                                                  double t2) {
  if (prototypes.empty()) throw Error(ErrorCode::kMissingPrototype, "empty prototype set");
  if (!(t1 >= 0 && t1 <= 1) || !(t2 >= -1 && t2 <= 1)) {
    throw Error(ErrorCode::kInvalidArgument, "thresholds out of range");
  }
  const FeatureBank bank = FeatureBank::from(prototypes);
  if (bank.features.cols() != map.dim()) throw Error(ErrorCode::kShapeMismatch, "feature dimensions differ");

  std::vector<int> cells;
  for (int c = 0; c < map.num_cells(); ++c) {
    if (map.heatmap.data[static_cast<size_t>(c)] >= t1) cells.push_back(c);
  }

  // Float GEMM shortlists candidates; the winner is decided in double.
  const Eigen::MatrixXf bank_t = bank.features.transpose().cast<float>();
  constexpr int kBlock = 256;
  constexpr float kSlack = 1e-4f;
  std::vector<Correspondence> out;
  FeatureMatrix block;
  Eigen::MatrixXf scores;
  for (size_t start = 0; start < cells.size(); start += kBlock) {
    const auto count = static_cast<Eigen::Index>(std::min<size_t>(kBlock, cells.size() - start));
    block.resize(count, map.dim());
    for (Eigen::Index r = 0; r < count; ++r) block.row(r) = map.features.row(cells[start + static_cast<size_t>(r)]);
    scores.noalias() = block * bank_t;
    for (Eigen::Index r = 0; r < count; ++r) {
      const int cell = cells[start + static_cast<size_t>(r)];
      const float top = scores.row(r).maxCoeff();
      const VecX f = map.features.row(cell).cast<double>().transpose();
      double best = -std::numeric_limits<double>::infinity();
      Eigen::Index best_j = -1;
      for (Eigen::Index j = 0; j < scores.cols(); ++j) {
        if (scores(r, j) < top - kSlack) continue;
        const double s = bank.features.row(j).dot(f);
        if (s > best) {
          best = s;
          best_j = j;
        }
      }
      if (best < t2) continue;
      const auto cat = static_cast<size_t>(
          std::upper_bound(bank.offsets.begin(), bank.offsets.end(), static_cast<int>(best_j)) -
          bank.offsets.begin() - 1);
      Correspondence c;
      c.pixel = map.cell_center(cell);
      c.category = bank.categories[cat];
      c.vertex_index = static_cast<int>(best_j) - bank.offsets[cat];
      c.similarity = std::clamp(best, -1.0, 1.0);
      c.cell = cell;
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace meshpose
