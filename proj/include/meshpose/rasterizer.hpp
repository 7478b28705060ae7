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

// Z-buffer rasterization of prototype meshes: per-vertex visibility
// annotations and per-object / scene foreground masks.

#pragma once

#include <limits>
#include <string>
#include <vector>

#include "meshpose/geometry.hpp"

namespace meshpose {

inline constexpr double kNoDepth = std::numeric_limits<double>::infinity();
inline constexpr double kVisibilityTolerance = 1e-3;

using DepthImage = Grid<double>;
using Mask = Grid<uint8_t>;

struct VertexAnnotation {
  int vertex_index = -1;
  Vec2 pixel = Vec2::Zero();
  bool visible = false;
};

struct RasterResult {
  std::vector<VertexAnnotation> vertices;
  DepthImage depth;
  bool empty_visibility = false;  // warning status, not an error
};

// Scan-converts triangles of camera-frame points into a depth image sampled
// at pixel centers (x + 0.5, y + 0.5) with a top-left fill rule. Depth is
// interpolated perspective-correctly. Throws kBehindCamera when any point
// has z <= 1e-9.
DepthImage render_depth(const Mat3X& camera_points, const Mat3Xi& triangles, const CameraIntrinsics& K);

// Projects every vertex and marks it visible when it lies inside the image
// and is not behind the z-buffer surface at its pixel by more than a
// relative 1e-3.
RasterResult rasterize_vertices(const Mat3X& vertices, const Mat3Xi& triangles, const CameraIntrinsics& K,
                                const Mat3& R, const Vec3& t);

enum class MultiObjectRule { kMaskOverlaps, kKeepNearest };

struct SceneMasks {
  std::vector<Mask> objects;
  Mask foreground;  // union before overlap handling
  std::vector<DepthImage> depths;
};

// Renders each ground-truth object with its prototype geometry (`variant`
// selects mean-shape or instance-shape) at the resolution of `K`.
SceneMasks render_prototype_masks(const SceneGroundTruth& scene, const PrototypeSet& prototypes,
                                  const CameraIntrinsics& K, MultiObjectRule rule = MultiObjectRule::kMaskOverlaps,
                                  ShapeVariant variant = ShapeVariant::kMeanShape);

// Binary PGM (P5), one byte per pixel, 0 or 255.
void write_pgm(const std::string& path, const Mask& mask);
Mask read_pgm(const std::string& path);

}  // namespace meshpose
