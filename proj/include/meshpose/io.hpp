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

// File formats.
//
//   prototype      binary "MPPROTO\0", u32 version, then per category:
//                  name, V, A, D, mean_size, mean_scale, vertices (f64),
//                  triangles (i32), features (f64); little-endian.
//   correspondence CSV: pixel_x,pixel_y,category,vertex,similarity
//   hypotheses     JSON lines: category, quaternion [w,x,y,z], translation,
//                  inliers, score
//   poses          JSON lines: category, quaternion, t, d, s and an
//                  optional integer "scene"
//   observation    binary "MPOBS\0\0\0", u32 version, u32 width, height,
//                  stride, D, then for the mean-scale and instance-scale
//                  maps: features (f32), heatmap (f32), labels (i32 object,
//                  i32 vertex, u8 replaced); then intrinsics (6 x f64) and
//                  the ground truth as a length-prefixed pose JSON block.

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "meshpose/robust_solver.hpp"
#include "meshpose/scene_sim.hpp"

namespace meshpose {

inline constexpr uint32_t kPrototypeFormatVersion = 1;
inline constexpr uint32_t kObservationFormatVersion = 1;

void write_prototypes(const std::string& path, const PrototypeSet& prototypes);
PrototypeSet read_prototypes(const std::string& path);

std::string correspondences_to_csv(const std::vector<Correspondence>& correspondences);
std::vector<Correspondence> correspondences_from_csv(const std::string& text);

std::string hypothesis_to_json(const PoseHypothesis& hypothesis);
PoseHypothesis hypothesis_from_json(const std::string& line);

// scene < 0 omits the field.
std::string pose_to_json(const Pose9D& pose, int scene = -1);
Pose9D pose_from_json(const std::string& line, int* scene = nullptr);

// Poses grouped by their "scene" field (0 when absent).
std::map<int, std::vector<Pose9D>> read_pose_lines(const std::string& path);
void write_pose_lines(const std::string& path, const std::map<int, std::vector<Pose9D>>& poses);

void write_observation(const std::string& path, const SimulatedObservation& observation);
SimulatedObservation read_observation(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace meshpose
