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
#include <iterator>
#include <map>

#include "meshpose/robust_solver.hpp"

namespace meshpose {
namespace {

constexpr int kInnerIterations = 10;
constexpr int kRefitRounds = 4;

struct Scored {
  Pose pose;
  double score = std::numeric_limits<double>::infinity();
  std::vector<int> inliers;
};

class MsacScorer {
 public:
  MsacScorer(const CameraIntrinsics& K, std::span<const Vec2> px, std::span<const Vec3> X, double threshold)
      : K_(K), px_(px), X_(X), thr_(threshold), thr2_(threshold * threshold) {}

  Scored score(const Pose& pose) const {
    Scored s;
    s.pose = pose;
    s.score = 0.0;
    for (size_t i = 0; i < px_.size(); ++i) {
      const double r = reprojection_residual(K_, pose.R, pose.t, px_[i], X_[i]);
      if (r <= thr_) {
        s.score += r * r;
        s.inliers.push_back(static_cast<int>(i));
      } else {
        s.score += thr2_;
      }
    }
    return s;
  }

  // Score only, stops early once `bound` is exceeded.
  double bounded(const Pose& pose, double bound) const {
    double total = 0.0;
    for (size_t i = 0; i < px_.size() && total < bound; ++i) {
      const double r = reprojection_residual(K_, pose.R, pose.t, px_[i], X_[i]);
      total += std::min(r * r, thr2_);
    }
    return total;
  }

 private:
  const CameraIntrinsics& K_;
  std::span<const Vec2> px_;
  std::span<const Vec3> X_;
  double thr_;
  double thr2_;
};

void gather(std::span<const Vec2> px, std::span<const Vec3> X, const std::vector<int>& idx, std::vector<Vec2>& px_out,
            std::vector<Vec3>& X_out) {
  px_out.clear();
  X_out.clear();
  for (int i : idx) {
    px_out.push_back(px[static_cast<size_t>(i)]);
    X_out.push_back(X[static_cast<size_t>(i)]);
  }
}

// Least-squares fit on a subset: EPnP, then LM from the better of the EPnP
// pose and `start`.
std::optional<Pose> fit_subset(const CameraIntrinsics& K, std::span<const Vec2> px, std::span<const Vec3> X,
                               const std::vector<int>& idx, const Pose* start) {
  if (idx.size() < 4) return std::nullopt;
  std::vector<Vec2> spx;
  std::vector<Vec3> sX;
  gather(px, X, idx, spx, sX);
  std::optional<Pose> init;
  try {
    init = solve_epnp(spx, sX, K);
  } catch (const Error&) {
  }
  if (start != nullptr) {
    auto cost = [&](const Pose& p) {
      double c = 0.0;
      for (size_t i = 0; i < spx.size(); ++i) {
        const double r = reprojection_residual(K, p.R, p.t, spx[i], sX[i]);
        c += r * r;
      }
      return c;
    };
    if (!init || cost(*start) < cost(*init)) init = *start;
  }
  if (!init) return std::nullopt;
  return refine_pose_lm(K, spx, sX, *init, 30).pose;
}

size_t adaptive_iterations(double inlier_ratio, double confidence, int cap) {
  if (inlier_ratio <= 0) return static_cast<size_t>(cap);
  const double p_good = std::pow(inlier_ratio, 3.0);
  if (p_good >= 1.0 - 1e-12) return 1;
  const double k = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  return static_cast<size_t>(std::clamp(std::ceil(k), 1.0, static_cast<double>(cap)));
}

// Inlier-set refit loop seeded from `model`: fit on inliers, rescore,
// repeat while the MSAC score improves.
Scored refit_loop(const CameraIntrinsics& K, std::span<const Vec2> px, std::span<const Vec3> X,
                  const MsacScorer& scorer, Scored model) {
  for (int round = 0; round < kRefitRounds; ++round) {
    auto fit = fit_subset(K, px, X, model.inliers, &model.pose);
    if (!fit) break;
    Scored next = scorer.score(*fit);
    if (!(next.score < model.score)) break;
    model = std::move(next);
  }
  return model;
}

}  // namespace

std::optional<PoseHypothesis> ransac_pnp(std::span<const Correspondence> correspondences, const Mat3X& vertices,
                                         const CameraIntrinsics& K, const SolverParams& params, SeedStream& rng) {
  params.validate();
  const size_t n = correspondences.size();
  if (n < static_cast<size_t>(params.min_inliers) || n < 3) return std::nullopt;

  std::vector<Vec2> px(n);
  std::vector<Vec3> X(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& c = correspondences[i];
    if (c.vertex_index < 0 || c.vertex_index >= vertices.cols()) {
      throw Error(ErrorCode::kInvalidArgument, "vertex index out of range");
    }
    px[i] = c.pixel;
    X[i] = vertices.col(c.vertex_index);
  }
  const MsacScorer scorer(K, px, X, params.pixel_threshold);

  Scored best;
  size_t needed = static_cast<size_t>(params.max_iterations);
  const int last = static_cast<int>(n) - 1;
  for (size_t iter = 0; iter < needed; ++iter) {
    const int i0 = rng.uniform_int(0, last);
    int i1 = rng.uniform_int(0, last - 1);
    if (i1 >= i0) ++i1;
    int i2 = rng.uniform_int(0, last - 2);
    for (int lo : {std::min(i0, i1), std::max(i0, i1)}) {
      if (i2 >= lo) ++i2;
    }
    std::vector<Pose> candidates;
    try {
      candidates = solve_p3p({px[static_cast<size_t>(i0)], px[static_cast<size_t>(i1)], px[static_cast<size_t>(i2)]},
                             {X[static_cast<size_t>(i0)], X[static_cast<size_t>(i1)], X[static_cast<size_t>(i2)]}, K);
    } catch (const Error&) {
      continue;
    }
    for (const auto& pose : candidates) {
      if (scorer.bounded(pose, best.score) >= best.score) continue;
      Scored s = scorer.score(pose);
      if (s.score < best.score) {
        best = std::move(s);
        needed = adaptive_iterations(static_cast<double>(best.inliers.size()) / static_cast<double>(n),
                                     params.confidence, params.max_iterations);
      }
    }
  }
  if (best.inliers.size() < 4) return std::nullopt;

  // Local optimization: inlier-set refit, then an inner RANSAC drawing
  // non-minimal samples from the current inliers.
  best = refit_loop(K, px, X, scorer, std::move(best));
  for (int it = 0; it < kInnerIterations && best.inliers.size() >= 8; ++it) {
    const size_t m = std::clamp<size_t>(best.inliers.size() / 2, 7, 24);
    std::vector<int> sample = best.inliers;
    for (size_t k = 0; k < m; ++k) {
      const auto j = static_cast<size_t>(rng.uniform_int(static_cast<int>(k), static_cast<int>(sample.size()) - 1));
      std::swap(sample[k], sample[j]);
    }
    sample.resize(m);
    auto fit = fit_subset(K, px, X, sample, nullptr);
    if (!fit) continue;
    Scored s = refit_loop(K, px, X, scorer, scorer.score(*fit));
    if (s.score < best.score) best = std::move(s);
  }

  if (best.inliers.size() < static_cast<size_t>(params.min_inliers)) return std::nullopt;
  PoseHypothesis h;
  h.category = correspondences.front().category;
  h.R = best.pose.R;
  h.t = best.pose.t;
  h.inliers = best.inliers;
  h.score = best.score;
  return h;
}

std::vector<PoseHypothesis> multi_model_pnp(std::span<const Correspondence> correspondences,
                                            const PrototypeSet& prototypes, const CameraIntrinsics& K,
                                            const SolverParams& params, const SeedStream& rng) {
  params.validate();
  std::map<std::string, std::vector<int>> groups;
  for (size_t i = 0; i < correspondences.size(); ++i) groups[correspondences[i].category].push_back(static_cast<int>(i));

  std::vector<PoseHypothesis> out;
  for (const auto& [category, members] : groups) {
    const Mat3X vertices = prototypes.at(category).mean_scale_vertices();
    const double mean_scale = prototypes.at(category).mean_scale;
    SeedStream stream = rng.fork(category);

    std::vector<PoseHypothesis> found;
    std::vector<std::vector<int>> support;  // inliers over the whole group
    std::vector<int> remaining = members;
    auto group_inliers = [&](const PoseHypothesis& h) {
      std::vector<int> idx;
      for (int i : members) {
        if (reprojection_residual(K, h.R, h.t, correspondences[static_cast<size_t>(i)], vertices) <=
            params.pixel_threshold) {
          idx.push_back(i);
        }
      }
      return idx;
    };
    for (int proposals = 0;
         static_cast<int>(found.size()) < params.max_instances && proposals < 2 * params.max_instances; ++proposals) {
      std::vector<Correspondence> subset;
      subset.reserve(remaining.size());
      for (int i : remaining) subset.push_back(correspondences[static_cast<size_t>(i)]);
      auto hyp = ransac_pnp(subset, vertices, K, params, stream);
      if (!hyp) break;
      std::vector<int> global;
      std::vector<char> taken(remaining.size(), 0);
      for (int local : hyp->inliers) {
        global.push_back(remaining[static_cast<size_t>(local)]);
        taken[static_cast<size_t>(local)] = 1;
      }
      std::vector<int> rest;
      for (size_t k = 0; k < remaining.size(); ++k) {
        if (!taken[k]) rest.push_back(remaining[k]);
      }
      remaining = std::move(rest);
      hyp->inliers = std::move(global);

      // A proposal whose support largely coincides with an accepted
      // instance re-describes that instance; its points stay consumed.
      std::vector<int> full = group_inliers(*hyp);
      bool duplicate = false;
      for (const auto& other : found) {
        const bool near = (other.t - hyp->t).norm() < params.duplicate_distance * mean_scale &&
                          rotation_angle(other.R, hyp->R) < params.duplicate_rotation;
        duplicate = duplicate || near;
      }
      for (const auto& other : support) {
        std::vector<int> common;
        std::set_intersection(full.begin(), full.end(), other.begin(), other.end(), std::back_inserter(common));
        const double overlap = static_cast<double>(common.size()) / static_cast<double>(std::min(full.size(), other.size()));
        duplicate = duplicate || overlap > params.duplicate_overlap;
      }
      if (duplicate) continue;
      support.push_back(std::move(full));
      found.push_back(std::move(*hyp));
    }
    if (found.empty()) continue;

    // Global reassignment: each correspondence joins its best hypothesis.
    std::vector<std::vector<int>> assigned(found.size());
    for (int i : members) {
      double best = params.pixel_threshold;
      int owner = -1;
      for (size_t h = 0; h < found.size(); ++h) {
        const double r = reprojection_residual(K, found[h].R, found[h].t, correspondences[static_cast<size_t>(i)], vertices);
        if (r < best || (owner < 0 && r <= best)) {
          best = r;
          owner = static_cast<int>(h);
        }
      }
      if (owner >= 0) assigned[static_cast<size_t>(owner)].push_back(i);
    }

    const double thr2 = params.pixel_threshold * params.pixel_threshold;
    for (size_t h = 0; h < found.size(); ++h) {
      auto& hyp = found[h];
      const auto& idx = assigned[h];
      if (idx.size() >= 4) {
        std::vector<Vec2> px;
        std::vector<Vec3> X;
        for (int i : idx) {
          px.push_back(correspondences[static_cast<size_t>(i)].pixel);
          X.push_back(vertices.col(correspondences[static_cast<size_t>(i)].vertex_index));
        }
        const auto refit = refine_pose_lm(K, px, X, hyp.pose(), 50);
        hyp.R = refit.pose.R;
        hyp.t = refit.pose.t;
      }
      hyp.inliers.clear();
      hyp.score = static_cast<double>(members.size() - idx.size()) * thr2;
      for (int i : idx) {
        const double r = reprojection_residual(K, hyp.R, hyp.t, correspondences[static_cast<size_t>(i)], vertices);
        if (r <= params.pixel_threshold) {
          hyp.inliers.push_back(i);
          hyp.score += r * r;
        } else {
          hyp.score += thr2;
        }
      }
      if (static_cast<int>(hyp.inliers.size()) >= params.min_inliers) out.push_back(std::move(hyp));
    }
  }
  return out;
}

}  // namespace meshpose
