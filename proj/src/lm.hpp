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

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace meshpose::detail {

struct LmSummary {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Small dense Levenberg-Marquardt. Problem provides
//   double linearize(const State&, Matrix<N,N>& JtJ, Matrix<N,1>& Jtr);
//   double cost(const State&);
//   State retract(const State&, const Matrix<N,1>& delta);
// Only cost-decreasing steps are accepted, so final_cost <= initial_cost.
template <int N, typename Problem, typename State>
LmSummary levenberg_marquardt(Problem& problem, State& state, int max_iterations, double rel_tol = 1e-10) {
  using MatN = Eigen::Matrix<double, N, N>;
  using VecN = Eigen::Matrix<double, N, 1>;
  LmSummary s;
  MatN JtJ;
  VecN Jtr;
  double cost = problem.linearize(state, JtJ, Jtr);
  s.initial_cost = cost;
  double lambda = 1e-3;
  for (s.iterations = 0; s.iterations < max_iterations; ++s.iterations) {
    if (cost <= 0.0 || Jtr.norm() <= 1e-15 * (1.0 + cost)) {
      s.converged = true;
      break;
    }
    MatN A = JtJ;
    for (int i = 0; i < N; ++i) A(i, i) += lambda * std::max(JtJ(i, i), 1e-12);
    const VecN delta = A.ldlt().solve(-Jtr);
    if (!delta.allFinite()) {
      lambda *= 10.0;
      continue;
    }
    State candidate = problem.retract(state, delta);
    const double new_cost = problem.cost(candidate);
    if (new_cost < cost) {
      const double rel = (cost - new_cost) / cost;
      state = candidate;
      cost = problem.linearize(state, JtJ, Jtr);
      lambda = std::max(lambda * 0.1, 1e-12);
      if (rel < rel_tol) {
        s.converged = true;
        ++s.iterations;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) {
        s.converged = true;
        break;
      }
    }
  }
  s.final_cost = cost;
  return s;
}

// Huber weight for a residual of norm r.
inline double huber_weight(double r, double delta) {
  if (delta <= 0.0 || r <= delta) return 1.0;
  return delta / r;
}

// Cost contribution matching huber_weight.
inline double huber_cost(double r2, double delta) {
  if (delta <= 0.0) return r2;
  const double r = std::sqrt(r2);
  return r <= delta ? r2 : 2.0 * delta * r - delta * delta;
}

}  // namespace meshpose::detail
