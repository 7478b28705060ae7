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

// vMF feature likelihood, the contrastive training objective and its
// gradient, dice loss, vMF sampling and dense 2D/3D feature matching.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "meshpose/geometry.hpp"
#include "meshpose/rasterizer.hpp"

namespace meshpose {

inline constexpr double kDefaultKappa = 1.0 / 0.07;
inline constexpr double kDiceEpsilon = 1e-6;

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Strided grid of unit feature vectors plus a foreground heatmap. Cell
// (x, y) has row index y * width + x and is centered at pixel
// stride * (x + 0.5, y + 0.5).
struct FeatureMap {
  int width = 0;
  int height = 0;
  int stride = 4;
  FeatureMatrix features;  // (width * height) x D
  Grid<float> heatmap;

  FeatureMap() = default;
  FeatureMap(int w, int h, int s, int dim);

  int dim() const { return static_cast<int>(features.cols()); }
  int num_cells() const { return width * height; }
  Vec2 cell_center(int cell) const;
  // -1 when the pixel falls outside the grid.
  int cell_at(const Vec2& pixel) const;
  // Throws when a feature is not unit-norm (1e-6) or heatmap leaves [0, 1].
  void validate() const;
};

struct Correspondence {
  Vec2 pixel = Vec2::Zero();
  std::string category;
  int vertex_index = -1;
  double similarity = 0.0;
  int cell = -1;
};

// All vertex features of a prototype set stacked in canonical order.
struct FeatureBank {
  MatX features;  // N x D
  std::vector<std::string> categories;
  std::vector<int> offsets;  // first row of each category

  static FeatureBank from(const PrototypeSet& prototypes);
  int offset(const std::string& category) const;
  // Writes rows back into the prototypes' vertex features.
  void store(PrototypeSet& prototypes) const;
};

struct AnnotationEntry {
  int bank_index = -1;  // row of theta_k in the feature bank
  VecX pixel_feature;   // f_k
  bool visible = false; // o_k
};

struct AnnotationSet {
  std::vector<AnnotationEntry> entries;
  int num_visible() const;
};

// Pairs every rasterized vertex with the feature of the map cell its
// projection falls into. Vertices outside the map or outside `object_mask`
// (cell resolution, optional) are marked invisible.
AnnotationSet build_annotation_set(const RasterResult& raster, const FeatureMap& map, int bank_offset,
                                   const MatX& bank, const Mask* object_mask = nullptr);

double vmf_log_likelihood(const VecX& f, const VecX& theta, double kappa);

VecX uniform_unit_vector(int dim, SeedStream& rng);
VecX sample_vmf(const VecX& mean, double kappa, SeedStream& rng);

// -sum_k o_k log(exp(k f.th_k) / (exp(k f.th_k) + sum_{m != k} exp(k f.th_m)))
// with the negatives being every other row of `bank`.
double contrastive_loss(const AnnotationSet& annotations, const MatX& bank, double kappa);

struct ContrastiveGradient {
  double loss = 0.0;
  MatX d_pixel;  // entries x D
  MatX d_bank;   // bank rows x D
};
ContrastiveGradient contrastive_loss_grad(const AnnotationSet& annotations, const MatX& bank, double kappa);

struct LossBreakdown {
  double total = 0.0;
  std::vector<double> per_object;
  double mask_loss = 0.0;
};

// Per object i: (L(mean-scale map) + L(deformed map)) / 2; total is their
// mean. An annotation set without visible vertices contributes zero.
LossBreakdown training_loss(std::span<const AnnotationSet> mean_maps, std::span<const AnnotationSet> deformed_maps,
                            const MatX& bank, double kappa);
// Same value plus the gradient with respect to the feature bank.
LossBreakdown training_loss_grad(std::span<const AnnotationSet> mean_maps,
                                 std::span<const AnnotationSet> deformed_maps, const MatX& bank, double kappa,
                                 MatX* d_bank);

double dice_loss(const Grid<double>& predicted, const Mask& target);
double mask_loss(const Grid<double>& instance_pred, const Mask& instance_gt, const Grid<double>& mean_pred,
                 const Mask& mean_gt);
Grid<double> minmax_normalize(const Grid<double>& values);

// Dense argmax matching of every cell with heatmap >= t1 against all vertex
// features; cells whose best similarity is below t2 are dropped. Ties go
// to the smallest (category, vertex). Output is sorted by cell index.
std::vector<Correspondence> match_correspondences(const FeatureMap& map, const PrototypeSet& prototypes, double t1,
                                                  double t2);

}  // namespace meshpose
