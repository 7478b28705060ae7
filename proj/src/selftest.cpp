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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "meshpose/cli.hpp"

namespace meshpose {
namespace {

constexpr int kGradientInstances = 50;
constexpr double kGradientTolerance = 1e-5;
constexpr int kIouPairs = 100;
constexpr double kIouTolerance = 0.01;
constexpr int kPnpPoses = 100;
constexpr double kPnpTolerance = 1e-6;

Mat3 random_rotation(SeedStream& rng) {
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i) q[i] = rng.normal();
  return quaternion_to_rotation(q.normalized());
}

OrientedBox random_box(SeedStream& rng) {
  OrientedBox b;
  b.center = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  b.rotation = random_rotation(rng);
  b.size = Vec3(rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0));
  return b;
}

SelftestCheck timed(const std::string& name, const std::function<void(SelftestCheck&)>& body) {
  SelftestCheck c;
  c.name = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.passed = false;
    c.detail = std::string("exception: ") + e.what();
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

std::string format(const char* fmt, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), fmt, a, b);
  return buf;
}

}  // namespace

double voxel_iou(const OrientedBox& a, const OrientedBox& b, int resolution) {
  const double n = resolution;
  const Mat3 to_b = b.rotation.transpose() * a.rotation;
  const Vec3 half_b = 0.5 * b.size;
  long long count = 0;
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      // Midpoints along the third axis of a: q(k) = q0 + k * dq in b's frame.
      const Vec3 local0((i + 0.5) / n - 0.5, (j + 0.5) / n - 0.5, 0.5 / n - 0.5);
      const Vec3 q0 = b.rotation.transpose() * (a.center - b.center) + to_b * local0.cwiseProduct(a.size);
      const Vec3 dq = to_b.col(2) * (a.size.z() / n);
      double lo = 0.0, hi = n - 1.0;
      for (int m = 0; m < 3 && lo <= hi; ++m) {
        if (std::abs(dq[m]) < 1e-300) {
          if (std::abs(q0[m]) > half_b[m]) hi = -1.0;
          continue;
        }
        double k0 = (-half_b[m] - q0[m]) / dq[m];
        double k1 = (half_b[m] - q0[m]) / dq[m];
        if (k0 > k1) std::swap(k0, k1);
        lo = std::max(lo, k0);
        hi = std::min(hi, k1);
      }
      if (lo <= hi) {
        const long long first = static_cast<long long>(std::ceil(lo));
        const long long last = static_cast<long long>(std::floor(hi));
        if (last >= first) count += last - first + 1;
      }
    }
  }
  const double inter = a.volume() * static_cast<double>(count) / (n * n * n);
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double contrastive_gradient_error(uint64_t seed, double perturbation) {
  SeedStream rng(seed);
  const int dim = 2 + rng.uniform_int(0, 10);
  const int rows = 3 + rng.uniform_int(0, 20);
  const int entries = 1 + rng.uniform_int(0, 6);
  const double kappa = kDefaultKappa * rng.uniform(0.1, 1.0);
  MatX bank(rows, dim);
  for (int r = 0; r < rows; ++r) bank.row(r) = uniform_unit_vector(dim, rng).transpose();
  AnnotationSet set;
  for (int e = 0; e < entries; ++e) {
    AnnotationEntry entry;
    entry.bank_index = rng.uniform_int(0, rows - 1);
    entry.pixel_feature = uniform_unit_vector(dim, rng);
    entry.visible = e == 0 || rng.uniform() < 0.7;
    set.entries.push_back(std::move(entry));
  }
  const auto g = contrastive_loss_grad(set, bank, kappa);
  const double h = 1e-6;
  VecX analytic(entries * dim + rows * dim), numeric(entries * dim + rows * dim);
  Eigen::Index k = 0;
  for (int e = 0; e < entries; ++e) {
    for (int d = 0; d < dim; ++d, ++k) {
      AnnotationSet plus = set, minus = set;
      plus.entries[static_cast<size_t>(e)].pixel_feature[d] += h;
      minus.entries[static_cast<size_t>(e)].pixel_feature[d] -= h;
      numeric[k] = (contrastive_loss(plus, bank, kappa) - contrastive_loss(minus, bank, kappa)) / (2 * h);
      analytic[k] = g.d_pixel(e, d);
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int d = 0; d < dim; ++d, ++k) {
      MatX plus = bank, minus = bank;
      plus(r, d) += h;
      minus(r, d) -= h;
      numeric[k] = (contrastive_loss(set, plus, kappa) - contrastive_loss(set, minus, kappa)) / (2 * h);
      analytic[k] = g.d_bank(r, d);
    }
  }
  analytic *= 1.0 + perturbation;
  return (analytic - numeric).norm() / std::max(numeric.norm(), 1e-300);
}

std::vector<SelftestCheck> run_selftest(const SelftestOptions& options) {
  std::vector<SelftestCheck> checks;
  const SeedStream root(options.seed);

  checks.push_back(timed("contrastive_gradient", [&](SelftestCheck& c) {
    double worst = 0.0;
    for (int i = 0; i < kGradientInstances; ++i) {
      worst = std::max(worst, contrastive_gradient_error(root.fork("gradient").fork(static_cast<uint64_t>(i)).seed(),
                                                         options.gradient_perturbation));
    }
    c.passed = worst < kGradientTolerance;
    c.detail = format("max relative error %.3g over 50 instances (limit %.0e)", worst, kGradientTolerance);
  }));

  checks.push_back(timed("iou3d_voxel", [&](SelftestCheck& c) {
    SeedStream rng = root.fork("iou");
    double worst = 0.0;
    for (int i = 0; i < kIouPairs; ++i) {
      const OrientedBox a = random_box(rng);
      const OrientedBox b = random_box(rng);
      worst = std::max(worst, std::abs(iou3d(a, b) - voxel_iou(a, b)));
    }
    c.passed = worst < kIouTolerance;
    c.detail = format("max |exact - voxel| %.3g over 100 pairs (limit %.2g)", worst, kIouTolerance);
  }));

  checks.push_back(timed("pnp_round_trip", [&](SelftestCheck& c) {
    SeedStream rng = root.fork("pnp");
    const CameraIntrinsics K;
    double worst = 0.0;
    for (int i = 0; i < kPnpPoses; ++i) {
      const Mat3 R = random_rotation(rng);
      const Vec3 t(rng.uniform(-0.2, 0.2), rng.uniform(-0.15, 0.15), rng.uniform(0.6, 2.0));
      std::vector<Vec3> X;
      std::vector<Vec2> px;
      while (X.size() < 40) {
        const Vec3 p(rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12));
        X.push_back(p);
        px.push_back(project_point(K, R, t, p));
      }
      const Pose epnp = solve_epnp(px, X, K);
      worst = std::max(worst, rotation_angle(epnp.R, R));
      double best_p3p = 1e9;
      for (const Pose& cand : solve_p3p({px[0], px[1], px[2]}, {X[0], X[1], X[2]}, K)) {
        best_p3p = std::min(best_p3p, rotation_angle(cand.R, R));
      }
      worst = std::max(worst, best_p3p);
    }
    c.passed = worst < kPnpTolerance;
    c.detail = format("max rotation error %.3g rad over 100 poses (limit %.0e)", worst, kPnpTolerance);
  }));
  return checks;
}

}  // namespace meshpose
