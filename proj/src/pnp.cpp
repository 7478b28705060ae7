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
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "lm.hpp"
#include "meshpose/robust_solver.hpp"

namespace meshpose {
namespace {

using Poly = std::vector<double>;  // coefficients, lowest degree first

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

Poly poly_add(const Poly& a, const Poly& b, double sb = 1.0) {
  Poly out(std::max(a.size(), b.size()), 0.0);
  for (size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (size_t i = 0; i < b.size(); ++i) out[i] += sb * b[i];
  return out;
}

Poly poly_scale(Poly a, double s) {
  for (double& v : a) v *= s;
  return a;
}

double poly_eval(const Poly& p, double x) {
  double v = 0.0;
  for (size_t i = p.size(); i-- > 0;) v = v * x + p[i];
  return v;
}

double poly_deriv_eval(const Poly& p, double x) {
  double v = 0.0;
  for (size_t i = p.size(); i-- > 1;) v = v * x + static_cast<double>(i) * p[i];
  return v;
}

// Real roots via companion-matrix eigenvalues, Newton-polished.
std::vector<double> real_roots(Poly p) {
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (p.size() > 1 && std::abs(p.back()) < 1e-14 * scale) p.pop_back();
  const auto deg = static_cast<int>(p.size()) - 1;
  if (deg < 1) return {};
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 0; i < deg; ++i) C(0, i) = -p[static_cast<size_t>(deg - 1 - i)] / p.back();
  for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
  std::vector<double> roots;
  for (int i = 0; i < deg; ++i) {
    const auto z = es.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 8; ++it) {
      const double d = poly_deriv_eval(p, x);
      if (d == 0.0) break;
      const double step = poly_eval(p, x) / d;
      x -= step;
      if (std::abs(step) < 1e-16 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

// Rigid transform mapping world points onto camera points (no scale).
Pose absolute_orientation(std::span<const Vec3> world, std::span<const Vec3> camera) {
  Vec3 mw = Vec3::Zero(), mc = Vec3::Zero();
  for (size_t i = 0; i < world.size(); ++i) {
    mw += world[i];
    mc += camera[i];
  }
  mw /= static_cast<double>(world.size());
  mc /= static_cast<double>(world.size());
  Mat3 H = Mat3::Zero();
  for (size_t i = 0; i < world.size(); ++i) H += (world[i] - mw) * (camera[i] - mc).transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) D(2, 2) = -1;
  Pose p;
  p.R = svd.matrixV() * D * svd.matrixU().transpose();
  p.t = mc - p.R * mw;
  return p;
}

Vec3 bearing(const CameraIntrinsics& K, const Vec2& px) {
  return Vec3((px.x() - K.cx) / K.fx, (px.y() - K.cy) / K.fy, 1.0).normalized();
}

double max_reprojection(const CameraIntrinsics& K, const Pose& pose, std::span<const Vec2> px,
                        std::span<const Vec3> X) {
  double worst = 0.0;
  for (size_t i = 0; i < px.size(); ++i) worst = std::max(worst, reprojection_residual(K, pose.R, pose.t, px[i], X[i]));
  return worst;
}

}  // namespace

void SolverParams::validate() const {
  if (!(pixel_threshold > 0)) throw Error(ErrorCode::kInvalidArgument, "pixel_threshold must be positive");
  if (min_inliers < 6) throw Error(ErrorCode::kInvalidArgument, "min_inliers must be at least 6");
  if (!(confidence > 0 && confidence < 1)) throw Error(ErrorCode::kInvalidArgument, "confidence must be in (0, 1)");
  if (!(duplicate_overlap > 0 && duplicate_overlap <= 1)) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate_overlap must be in (0, 1]");
  }
  if (!(duplicate_distance >= 0) || !(duplicate_rotation >= 0)) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate tolerances must be non-negative");
  }
  if (max_iterations <= 0 || max_instances <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "iteration and instance limits must be positive");
  }
}

double reprojection_residual(const CameraIntrinsics& K, const Mat3& R, const Vec3& t, const Vec2& pixel,
                             const Vec3& point) {
  const Vec3 X = R * point + t;
  if (X.z() <= 1e-9) return kBehindCameraResidual;
  const Vec2 proj(K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy);
  return (proj - pixel).norm();
}

double reprojection_residual(const CameraIntrinsics& K, const Mat3& R, const Vec3& t, const Correspondence& c,
                             const Mat3X& vertices) {
  if (c.vertex_index < 0 || c.vertex_index >= vertices.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "vertex index out of range");
  }
  return reprojection_residual(K, R, t, c.pixel, vertices.col(c.vertex_index));
}

std::vector<Pose> solve_p3p(const std::array<Vec2, 3>& pixels, const std::array<Vec3, 3>& points,
                            const CameraIntrinsics& K) {
  const double span = std::max({(points[1] - points[0]).norm(), (points[2] - points[0]).norm(),
                                (points[2] - points[1]).norm()});
  const double cross = (points[1] - points[0]).cross(points[2] - points[0]).norm();
  if (span <= 1e-12 || cross <= 1e-10 * span * span) {
    throw Error(ErrorCode::kDegenerateConfiguration, "P3P points are collinear");
  }

  // Grunert: depths s1, s2 = u s1, s3 = v s1 along unit bearings j1..j3.
  const std::array<Vec3, 3> j = {bearing(K, pixels[0]), bearing(K, pixels[1]), bearing(K, pixels[2])};
  const double a2 = (points[1] - points[2]).squaredNorm();
  const double b2 = (points[0] - points[2]).squaredNorm();
  const double c2 = (points[0] - points[1]).squaredNorm();
  const double ca = j[1].dot(j[2]);
  const double cb = j[0].dot(j[2]);
  const double cg = j[0].dot(j[1]);

  // b^2 = s1^2 P(v); eliminating u between the two remaining distance
  // equations gives u = N(v) / Dn(v) and the quartic below.
  const Poly P = {1.0, -2.0 * cb, 1.0};
  const Poly N = poly_add(poly_scale(P, a2 - c2), Poly{-b2, 0.0, b2}, -1.0);
  const Poly Dn = {2.0 * b2 * cg, -2.0 * b2 * ca};
  const Poly Q = poly_add(Poly{b2}, poly_scale(P, c2), -1.0);
  const Poly quartic = poly_add(poly_add(poly_scale(poly_mul(N, N), b2), poly_scale(poly_mul(N, Dn), -2.0 * b2 * cg)),
                                poly_mul(Q, poly_mul(Dn, Dn)));

  std::vector<Pose> out;
  const std::array<double, 3> d2 = {c2, b2, a2};  // pairs (0,1), (0,2), (1,2)
  const std::array<double, 3> cosines = {cg, cb, ca};
  constexpr std::array<std::array<int, 2>, 3> pairs = {{{0, 1}, {0, 2}, {1, 2}}};

  for (double v : real_roots(quartic)) {
    if (v <= 0) continue;
    const double pv = poly_eval(P, v);
    if (pv <= 0) continue;
    std::vector<double> us;
    const double dn = poly_eval(Dn, v);
    if (std::abs(dn) > 1e-12 * b2) {
      us.push_back(poly_eval(N, v) / dn);
    } else {
      // u from b^2 u^2 - 2 b^2 cg u + (b^2 - c^2 P(v)) = 0
      const double disc = cg * cg - (b2 - c2 * pv) / b2;
      if (disc < 0) continue;
      us.push_back(cg + std::sqrt(disc));
      us.push_back(cg - std::sqrt(disc));
    }
    for (double u : us) {
      if (u <= 0) continue;
      const double s1 = std::sqrt(b2 / pv);
      Vec3 s(s1, u * s1, v * s1);

      // Newton on the three law-of-cosines equations.
      for (int it = 0; it < 6; ++it) {
        Vec3 f;
        Mat3 J = Mat3::Zero();
        for (int p = 0; p < 3; ++p) {
          const int a = pairs[static_cast<size_t>(p)][0], b = pairs[static_cast<size_t>(p)][1];
          const double cab = cosines[static_cast<size_t>(p)];
          f[p] = s[a] * s[a] + s[b] * s[b] - 2.0 * s[a] * s[b] * cab - d2[static_cast<size_t>(p)];
          J(p, a) = 2.0 * s[a] - 2.0 * s[b] * cab;
          J(p, b) = 2.0 * s[b] - 2.0 * s[a] * cab;
        }
        const Vec3 step = J.colPivHouseholderQr().solve(f);
        if (!step.allFinite()) break;
        s -= step;
        if (step.norm() < 1e-15 * s.norm()) break;
      }
      if ((s.array() <= 0).any()) continue;

      std::array<Vec3, 3> cam = {s[0] * j[0], s[1] * j[1], s[2] * j[2]};
      Pose pose = absolute_orientation(points, cam);
      if (max_reprojection(K, pose, pixels, points) > 1e-6) continue;
      const bool duplicate = std::any_of(out.begin(), out.end(), [&](const Pose& q) {
        return (q.R - pose.R).norm() < 1e-9 && (q.t - pose.t).norm() < 1e-9 * (1.0 + pose.t.norm());
      });
      if (!duplicate) out.push_back(pose);
    }
  }
  return out;
}

Pose solve_epnp(std::span<const Vec2> pixels, std::span<const Vec3> points, const CameraIntrinsics& K) {
  const size_t n = points.size();
  if (n != pixels.size()) throw Error(ErrorCode::kInvalidArgument, "pixel and point counts differ");
  if (n < 4) throw Error(ErrorCode::kInsufficientPoints, "EPnP needs at least 4 correspondences");

  Vec3 centroid = Vec3::Zero();
  for (const auto& X : points) centroid += X;
  centroid /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (const auto& X : points) cov += (X - centroid) * (X - centroid).transpose();
  cov /= static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat3> pca(cov);
  const Vec3 lambda = pca.eigenvalues();  // ascending
  if (!(lambda[2] > 0) || lambda[1] <= 1e-12 * lambda[2]) {
    throw Error(ErrorCode::kDegenerateConfiguration, "EPnP points are collinear");
  }
  const bool planar = lambda[0] <= 1e-10 * lambda[2];
  const int nc = planar ? 3 : 4;

  // Control points: centroid plus principal directions, largest first.
  std::vector<Vec3> ctrl = {centroid};
  std::vector<Vec3> axes;
  std::vector<double> sigma;
  for (int k = 2; k >= 4 - nc; --k) {
    sigma.push_back(std::sqrt(lambda[k]));
    axes.push_back(pca.eigenvectors().col(k));
    ctrl.push_back(centroid + sigma.back() * axes.back());
  }

  Eigen::MatrixXd alphas(static_cast<Eigen::Index>(n), nc);
  for (size_t i = 0; i < n; ++i) {
    double rest = 1.0;
    for (int j = 1; j < nc; ++j) {
      const double a = (points[i] - centroid).dot(axes[static_cast<size_t>(j - 1)]) / sigma[static_cast<size_t>(j - 1)];
      alphas(static_cast<Eigen::Index>(i), j) = a;
      rest -= a;
    }
    alphas(static_cast<Eigen::Index>(i), 0) = rest;
  }

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(n), 3 * nc);
  for (size_t i = 0; i < n; ++i) {
    const double x = (pixels[i].x() - K.cx) / K.fx;
    const double y = (pixels[i].y() - K.cy) / K.fy;
    const auto r = 2 * static_cast<Eigen::Index>(i);
    for (int j = 0; j < nc; ++j) {
      const double a = alphas(static_cast<Eigen::Index>(i), j);
      M(r, 3 * j) = a;
      M(r, 3 * j + 2) = -a * x;
      M(r + 1, 3 * j + 1) = a;
      M(r + 1, 3 * j + 2) = -a * y;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> kernel(M.transpose() * M);
  const Eigen::MatrixXd& V = kernel.eigenvectors();  // ascending eigenvalues

  std::vector<std::array<int, 2>> pairs;
  for (int a = 0; a < nc; ++a) {
    for (int b = a + 1; b < nc; ++b) pairs.push_back({a, b});
  }
  const auto n_pairs = static_cast<Eigen::Index>(pairs.size());
  Eigen::VectorXd rho(n_pairs);
  // dv[k](p) = difference of kernel vector k between the pair's control points
  std::vector<Eigen::Matrix3Xd> dv(static_cast<size_t>(nc), Eigen::Matrix3Xd(3, n_pairs));
  for (Eigen::Index p = 0; p < n_pairs; ++p) {
    const auto [a, b] = pairs[static_cast<size_t>(p)];
    rho[p] = (ctrl[static_cast<size_t>(a)] - ctrl[static_cast<size_t>(b)]).squaredNorm();
    for (int k = 0; k < nc; ++k) dv[static_cast<size_t>(k)].col(p) = V.col(k).segment<3>(3 * a) - V.col(k).segment<3>(3 * b);
  }

  auto pose_from_betas = [&](const Eigen::VectorXd& beta) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(3 * nc);
    for (int k = 0; k < nc; ++k) c += beta[k] * V.col(k);
    std::vector<Vec3> cam(n);
    double zsum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      Vec3 P = Vec3::Zero();
      for (int j = 0; j < nc; ++j) P += alphas(static_cast<Eigen::Index>(i), j) * c.segment<3>(3 * j);
      cam[i] = P;
      zsum += P.z();
    }
    if (zsum < 0) {
      for (auto& P : cam) P = -P;
    }
    return absolute_orientation(points, cam);
  };

  auto gauss_newton = [&](Eigen::VectorXd beta) {
    auto residuals = [&](const Eigen::VectorXd& b, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
      r.resize(n_pairs);
      if (J != nullptr) J->resize(n_pairs, nc);
      for (Eigen::Index p = 0; p < n_pairs; ++p) {
        Vec3 d = Vec3::Zero();
        for (int k = 0; k < nc; ++k) d += b[k] * dv[static_cast<size_t>(k)].col(p);
        r[p] = d.squaredNorm() - rho[p];
        if (J != nullptr) {
          for (int k = 0; k < nc; ++k) (*J)(p, k) = 2.0 * d.dot(dv[static_cast<size_t>(k)].col(p));
        }
      }
    };
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    residuals(beta, r, &J);
    double cost = r.squaredNorm();
    for (int it = 0; it < 20 && cost > 0; ++it) {
      const Eigen::VectorXd step = J.colPivHouseholderQr().solve(-r);
      const Eigen::VectorXd next = beta + step;
      Eigen::VectorXd r_next;
      residuals(next, r_next, nullptr);
      if (!(r_next.squaredNorm() < cost)) break;
      beta = next;
      cost = r_next.squaredNorm();
      residuals(beta, r, &J);
      if (step.norm() <= 1e-14 * (1.0 + beta.norm())) break;
    }
    return beta;
  };

  Pose best;
  double best_err = std::numeric_limits<double>::infinity();
  Eigen::VectorXd previous = Eigen::VectorXd::Zero(nc);
  for (int dims = 1; dims <= nc; ++dims) {
    Eigen::VectorXd beta = previous;
    const int products = dims * (dims + 1) / 2;
    if (products <= n_pairs) {
      // Linearize over the products beta_k beta_l (k <= l < dims).
      Eigen::MatrixXd L(n_pairs, products);
      for (Eigen::Index p = 0; p < n_pairs; ++p) {
        int col = 0;
        for (int k = 0; k < dims; ++k) {
          for (int l = k; l < dims; ++l) {
            L(p, col++) = (k == l ? 1.0 : 2.0) *
                          dv[static_cast<size_t>(k)].col(p).dot(dv[static_cast<size_t>(l)].col(p));
          }
        }
      }
      const Eigen::VectorXd prod = L.colPivHouseholderQr().solve(rho);
      // prod index of (k, l) for k <= l
      auto at = [&](int k, int l) {
        int idx = 0;
        for (int a = 0; a < k; ++a) idx += dims - a;
        return prod[idx + (l - k)];
      };
      beta.setZero();
      beta[0] = std::sqrt(std::abs(at(0, 0)));
      for (int k = 1; k < dims; ++k) beta[k] = std::copysign(std::sqrt(std::abs(at(k, k))), at(0, k));
    }
    beta = gauss_newton(beta);
    previous = beta;
    const Pose pose = pose_from_betas(beta);
    double err = 0.0;
    for (size_t i = 0; i < n; ++i) err += reprojection_residual(K, pose.R, pose.t, pixels[i], points[i]);
    err /= static_cast<double>(n);
    if (err < best_err) {
      best_err = err;
      best = pose;
    }
  }
  // Below six points the kernel has more than one dimension and the beta
  // approximations can settle in a wrong minimum; P3P on each triplet,
  // scored on all points, covers those cases.
  if (n < 6) {
    for (size_t a = 0; a < n; ++a) {
      for (size_t b = a + 1; b < n; ++b) {
        for (size_t c = b + 1; c < n; ++c) {
          std::vector<Pose> candidates;
          try {
            candidates = solve_p3p({pixels[a], pixels[b], pixels[c]}, {points[a], points[b], points[c]}, K);
          } catch (const Error&) {
            continue;
          }
          for (const Pose& pose : candidates) {
            double err = 0.0;
            for (size_t i = 0; i < n; ++i) err += reprojection_residual(K, pose.R, pose.t, pixels[i], points[i]);
            err /= static_cast<double>(n);
            if (err < best_err) {
              best_err = err;
              best = pose;
            }
          }
        }
      }
    }
  }
  best.R = nearest_rotation(best.R);
  return best;
}

namespace {

struct PoseProblem {
  const CameraIntrinsics& K;
  std::span<const Vec2> pixels;
  std::span<const Vec3> points;
  double huber_delta;

  double cost(const Pose& p) const {
    double c = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
      const double r = reprojection_residual(K, p.R, p.t, pixels[i], points[i]);
      c += detail::huber_cost(r * r, huber_delta);
    }
    return c;
  }

  double linearize(const Pose& p, Eigen::Matrix<double, 6, 6>& JtJ, Eigen::Matrix<double, 6, 1>& Jtr) const {
    JtJ.setZero();
    Jtr.setZero();
    double c = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
      const Vec3 RX = p.R * points[i];
      const Vec3 X = RX + p.t;
      if (X.z() <= 1e-9) {
        c += detail::huber_cost(kBehindCameraResidual * kBehindCameraResidual, huber_delta);
        continue;
      }
      const double iz = 1.0 / X.z();
      const Vec2 r(K.fx * X.x() * iz + K.cx - pixels[i].x(), K.fy * X.y() * iz + K.cy - pixels[i].y());
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << K.fx * iz, 0, -K.fx * X.x() * iz * iz, 0, K.fy * iz, -K.fy * X.y() * iz * iz;
      Eigen::Matrix<double, 2, 6> J;
      J.leftCols<3>() = -dpi * skew(RX);
      J.rightCols<3>() = dpi;
      const double w = detail::huber_weight(r.norm(), huber_delta);
      JtJ.noalias() += w * J.transpose() * J;
      Jtr.noalias() += w * J.transpose() * r;
      c += detail::huber_cost(r.squaredNorm(), huber_delta);
    }
    return c;
  }

  Pose retract(const Pose& p, const Eigen::Matrix<double, 6, 1>& d) const {
    return {nearest_rotation(rotation_exp(d.head<3>()) * p.R), p.t + d.tail<3>()};
  }
};

}  // namespace

PoseRefinement refine_pose_lm(const CameraIntrinsics& K, std::span<const Vec2> pixels,
                              std::span<const Vec3> points, const Pose& initial, int max_iterations,
                              double huber_delta) {
  if (pixels.size() != points.size()) throw Error(ErrorCode::kInvalidArgument, "pixel and point counts differ");
  PoseProblem problem{K, pixels, points, huber_delta};
  PoseRefinement out;
  out.pose = initial;
  out.pose.R = nearest_rotation(initial.R);
  const auto s = detail::levenberg_marquardt<6>(problem, out.pose, max_iterations);
  out.initial_cost = s.initial_cost;
  out.final_cost = s.final_cost;
  out.iterations = s.iterations;
  out.converged = s.converged;
  return out;
}

}  // namespace meshpose
