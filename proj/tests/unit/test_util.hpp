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

// Helpers shared by the unit tests. Oracles here are written independently
// of the library code they check.

#pragma once

#include <cmath>

#include <doctest.h>

#include "meshpose/geometry.hpp"
#include "meshpose/types.hpp"

namespace meshpose::testing {

// Haar-uniform rotation from a normalized Gaussian quaternion, built with
// the explicit quaternion-to-matrix formula.
inline Mat3 random_rotation(SeedStream& rng) {
  double w = rng.normal(), x = rng.normal(), y = rng.normal(), z = rng.normal();
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n, x /= n, y /= n, z /= n;
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

// Rodrigues rotation about a (not necessarily unit) axis.
inline Mat3 axis_angle(Vec3 axis, double angle) {
  axis.normalize();
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
}

// Geodesic angle from the chord length, which stays accurate near zero
// where the trace formula loses half its digits.
inline double geodesic(const Mat3& a, const Mat3& b) {
  return 2.0 * std::asin(std::min(1.0, (a - b).norm() / (2.0 * std::sqrt(2.0))));
}

inline double deg(double rad) { return rad * 180.0 / M_PI; }

// Expects `fn` to throw meshpose::Error carrying `code`.
template <typename Fn>
void check_error(Fn&& fn, ErrorCode code) {
  bool thrown = false;
  try {
    fn();
  } catch (const Error& e) {
    thrown = true;
    CHECK(e.code() == code);
  }
  CHECK(thrown);
}

}  // namespace meshpose::testing
