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

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace meshpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat3X = Eigen::Matrix3Xd;
using Mat3Xi = Eigen::Matrix3Xi;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

enum class ErrorCode {
  kInvalidArgument,
  kInvalidSize,
  kInsufficientResolution,
  kInvalidDeformation,
  kEmptyInput,
  kBehindCamera,
  kNormalization,
  kInvalidConcentration,
  kUndefinedLoss,
  kInconsistentAnnotation,
  kShapeMismatch,
  kMissingPrototype,
  kDegenerateConfiguration,
  kInsufficientPoints,
  kInsufficientSupport,
  kInvalidScale,
  kInvalidRotation,
  kPlacementFailure,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this exception type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Dense row-major 2D grid.
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  T& operator()(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const T& operator()(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Grid& o) const { return width == o.width && height == o.height; }
};

// Reproducible random stream. fork() derives independent child streams
// keyed by an integer, so parallel jobs never share engine state.
class SeedStream {
 public:
  explicit SeedStream(uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  SeedStream fork(uint64_t key) const { return SeedStream(mix(seed_ ^ mix(key + 0x9e3779b97f4a7c15ULL))); }
  SeedStream fork(std::string_view key) const { return fork(fnv1a(key)); }

  uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  static uint64_t mix(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace meshpose
