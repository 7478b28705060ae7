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

#include "meshpose/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>
#include <Eigen/SVD>

namespace meshpose {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidSize: return "invalid-size";
    case ErrorCode::kInsufficientResolution: return "insufficient-resolution";
    case ErrorCode::kInvalidDeformation: return "invalid-deformation";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kBehindCamera: return "behind-camera";
    case ErrorCode::kNormalization: return "normalization";
    case ErrorCode::kInvalidConcentration: return "invalid-concentration";
    case ErrorCode::kUndefinedLoss: return "undefined-loss";
    case ErrorCode::kInconsistentAnnotation: return "inconsistent-annotation";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kMissingPrototype: return "missing-prototype";
    case ErrorCode::kDegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::kInsufficientPoints: return "insufficient-points";
    case ErrorCode::kInsufficientSupport: return "insufficient-support";
    case ErrorCode::kInvalidScale: return "invalid-scale";
    case ErrorCode::kInvalidRotation: return "invalid-rotation";
    case ErrorCode::kPlacementFailure: return "placement-failure";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height)) {
    throw Error(ErrorCode::kInvalidArgument, "principal point outside the image");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 K;
  K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return K;
}

CameraIntrinsics CameraIntrinsics::downscaled(int stride) const {
  if (stride <= 0) throw Error(ErrorCode::kInvalidArgument, "stride must be positive");
  CameraIntrinsics out;
  out.fx = fx / stride;
  out.fy = fy / stride;
  out.cx = cx / stride;
  out.cy = cy / stride;
  out.width = (width + stride - 1) / stride;
  out.height = (height + stride - 1) / stride;
  return out;
}

PrototypeSet::PrototypeSet(std::vector<CategoryPrototype> prototypes) {
  for (auto& p : prototypes) add(std::move(p));
}

void PrototypeSet::add(CategoryPrototype prototype) {
  auto it = std::lower_bound(prototypes_.begin(), prototypes_.end(), prototype.category,
                             [](const CategoryPrototype& p, const std::string& c) { return p.category < c; });
  if (it != prototypes_.end() && it->category == prototype.category) {
    *it = std::move(prototype);
  } else {
    prototypes_.insert(it, std::move(prototype));
  }
}

const CategoryPrototype* PrototypeSet::find(const std::string& category) const {
  auto it = std::lower_bound(prototypes_.begin(), prototypes_.end(), category,
                             [](const CategoryPrototype& p, const std::string& c) { return p.category < c; });
  if (it == prototypes_.end() || it->category != category) return nullptr;
  return &*it;
}

const CategoryPrototype& PrototypeSet::at(const std::string& category) const {
  const auto* p = find(category);
  if (p == nullptr) throw Error(ErrorCode::kMissingPrototype, "no prototype for category '" + category + "'");
  return *p;
}

Pose9D Pose9D::make(std::string category, const Mat3& R, const Vec3& t, const Vec3& deformation,
                    const Vec3& size) {
  if (!is_rotation(R, 1e-6)) throw Error(ErrorCode::kInvalidRotation, "pose rotation is not in SO(3)");
  if ((deformation.array() <= 0).any()) {
    throw Error(ErrorCode::kInvalidDeformation, "deformation multipliers must be positive");
  }
  if (!(t.z() > 0)) throw Error(ErrorCode::kBehindCamera, "object center must be in front of the camera");
  Pose9D p;
  p.category = std::move(category);
  p.R = R;
  p.t = t;
  p.deformation = deformation;
  p.size = size;
  p.scale = size.norm();
  return p;
}

namespace {

// Vertex lattice on the surface of an axis-aligned box: integer coordinates
// (i, j, k) in [0, n] per axis, kept when at least one is on the boundary.
struct SurfaceLattice {
  Eigen::Vector3i n;
  std::vector<int> index;  // dense (n+1)^3 map, -1 for interior points

  int& at(int i, int j, int k) { return index[(static_cast<size_t>(i) * (n[1] + 1) + j) * (n[2] + 1) + k]; }
};

}  // namespace

double density_for_vertex_count(const Vec3& raw_mean_size, int target_vertices) {
  if ((raw_mean_size.array() <= 0).any()) throw Error(ErrorCode::kInvalidSize, "mean size must be positive");
  const Vec3 s = raw_mean_size.normalized();
  const double area = 2.0 * (s.x() * s.y() + s.y() * s.z() + s.x() * s.z());
  return target_vertices / area;
}

CategoryPrototype build_prototype(const std::string& category, const Vec3& raw_mean_size,
                                  double vertices_per_unit_area, int feature_dim, uint64_t seed) {
  if (!(raw_mean_size.array() > 0).all() || !raw_mean_size.allFinite()) {
    throw Error(ErrorCode::kInvalidSize, "mean size components must be strictly positive");
  }
  if (feature_dim <= 1) throw Error(ErrorCode::kInvalidArgument, "feature dimension must be at least 2");
  const double raw_norm = raw_mean_size.norm();
  const Vec3 s = raw_mean_size / raw_norm;
  const double area = 2.0 * (s.x() * s.y() + s.y() * s.z() + s.x() * s.z());
  if (!(vertices_per_unit_area * area >= 8.0)) {
    throw Error(ErrorCode::kInsufficientResolution, "vertex budget below the 8 box corners");
  }

  // A common grid spacing h makes face cell counts proportional to area.
  const double h = 1.0 / std::sqrt(vertices_per_unit_area);
  SurfaceLattice lat;
  for (int a = 0; a < 3; ++a) lat.n[a] = std::max(1, static_cast<int>(std::lround(s[a] / h)));
  lat.index.assign(static_cast<size_t>(lat.n[0] + 1) * (lat.n[1] + 1) * (lat.n[2] + 1), -1);

  std::vector<Vec3> verts;
  for (int i = 0; i <= lat.n[0]; ++i) {
    for (int j = 0; j <= lat.n[1]; ++j) {
      for (int k = 0; k <= lat.n[2]; ++k) {
        const bool boundary = i == 0 || i == lat.n[0] || j == 0 || j == lat.n[1] || k == 0 || k == lat.n[2];
        if (!boundary) continue;
        lat.at(i, j, k) = static_cast<int>(verts.size());
        verts.emplace_back(s.x() * (static_cast<double>(i) / lat.n[0] - 0.5),
                           s.y() * (static_cast<double>(j) / lat.n[1] - 0.5),
                           s.z() * (static_cast<double>(k) / lat.n[2] - 0.5));
      }
    }
  }

  // Two triangles per face cell, wound counter-clockwise seen from outside.
  std::vector<Eigen::Vector3i> tris;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      const int fixed = side == 0 ? 0 : lat.n[axis];
      for (int a = 0; a < lat.n[u]; ++a) {
        for (int b = 0; b < lat.n[v]; ++b) {
          auto idx = [&](int du, int dv) {
            Eigen::Vector3i c;
            c[axis] = fixed;
            c[u] = a + du;
            c[v] = b + dv;
            return lat.at(c[0], c[1], c[2]);
          };
          const int i00 = idx(0, 0), i10 = idx(1, 0), i11 = idx(1, 1), i01 = idx(0, 1);
          if (side == 1) {
            tris.emplace_back(i00, i10, i11);
            tris.emplace_back(i00, i11, i01);
          } else {
            tris.emplace_back(i00, i11, i10);
            tris.emplace_back(i00, i01, i11);
          }
        }
      }
    }
  }

  CategoryPrototype p;
  p.category = category;
  p.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (size_t i = 0; i < verts.size(); ++i) p.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
  p.triangles.resize(3, static_cast<Eigen::Index>(tris.size()));
  for (size_t i = 0; i < tris.size(); ++i) p.triangles.col(static_cast<Eigen::Index>(i)) = tris[i];

  SeedStream rng(seed);
  p.features.resize(p.vertices.cols(), feature_dim);
  for (Eigen::Index r = 0; r < p.features.rows(); ++r) {
    for (int c = 0; c < feature_dim; ++c) p.features(r, c) = rng.normal();
    p.features.row(r).normalize();
  }
  p.mean_size = s;
  p.mean_scale = raw_norm;
  return p;
}

CategoryPrototype deform_mesh(const CategoryPrototype& prototype, const Vec3& d) {
  if (!(d.array() > 0).all()) throw Error(ErrorCode::kInvalidDeformation, "deformation must be strictly positive");
  CategoryPrototype out = prototype;
  out.vertices = d.asDiagonal() * prototype.vertices;
  return out;
}

Vec3 bounding_box_size(const Mat3X& vertices) {
  if (vertices.cols() == 0) throw Error(ErrorCode::kEmptyInput, "bounding box of an empty vertex set");
  return vertices.rowwise().maxCoeff() - vertices.rowwise().minCoeff();
}

Vec2 project_point(const CameraIntrinsics& K, const Mat3& R, const Vec3& t, const Vec3& x) {
  const Vec3 X = R * x + t;
  if (X.z() <= 1e-9) throw Error(ErrorCode::kBehindCamera, "point behind the camera");
  return {K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy};
}

Mat3X instance_vertices(const CategoryPrototype& prototype, const Pose9D& pose, ShapeVariant variant) {
  if (variant == ShapeVariant::kMeanShape) return prototype.vertices * pose.scale;
  const Vec3 per_axis = pose.size.cwiseQuotient(prototype.mean_size);
  return per_axis.asDiagonal() * prototype.vertices;
}

bool is_rotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  return (R.transpose() * R - Mat3::Identity()).norm() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

Mat3 nearest_rotation(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) D(2, 2) = -1;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

Mat3 rotation_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(omega);
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

double rotation_angle(const Mat3& R_a, const Mat3& R_b) {
  // atan2 form keeps precision near zero where acos loses it.
  const Mat3 D = R_a.transpose() * R_b;
  const double c = 0.5 * (D.trace() - 1.0);
  const Vec3 w(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
  return std::atan2(0.5 * w.norm(), c);
}

Eigen::Vector4d rotation_to_quaternion(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1;
  return {q.w(), q.x(), q.y(), q.z()};
}

Mat3 quaternion_to_rotation(const Eigen::Vector4d& wxyz) {
  Eigen::Quaterniond q(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
  if (q.norm() < 1e-12) throw Error(ErrorCode::kInvalidRotation, "zero quaternion");
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace meshpose
