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
#include <tuple>

#include "meshpose/feature_model.hpp"
#include "test_util.hpp"

namespace meshpose {
namespace {

using testing::check_error;

VecX unit(int dim, SeedStream& rng) {
  VecX v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return v.normalized();
}

MatX unit_rows(int rows, int dim, SeedStream& rng) {
  MatX m(rows, dim);
  for (int r = 0; r < rows; ++r) m.row(r) = unit(dim, rng).transpose();
  return m;
}

// Mean resultant length A_D(kappa) = E[mu . x] of the vMF, from the density
// of t = mu . x, proportional to (1 - t^2)^((D-3)/2) exp(kappa t), by
// composite Simpson quadrature.
double vmf_mean_resultant(int dim, double kappa) {
  const int n = 200000;
  const double h = 2.0 / n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = -1.0 + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double base = 1.0 - t * t;
    const double density = std::pow(std::max(base, 0.0), 0.5 * (dim - 3)) * std::exp(kappa * (t - 1.0));
    num += w * t * density;
    den += w * density;
  }
  return num / den;
}

TEST_CASE("vmf_log_likelihood") {
  const VecX theta = VecX::Unit(8, 2);
  CHECK(vmf_log_likelihood(theta, theta, 1.0 / 0.07) == doctest::Approx(14.285714285714286).epsilon(1e-15));
  CHECK(vmf_log_likelihood(VecX::Unit(8, 1), theta, 3.7) == 0.0);
  CHECK(vmf_log_likelihood(-theta, theta, 2.0) == -2.0);
  check_error([&] { vmf_log_likelihood(2.0 * theta, theta, 1.0); }, ErrorCode::kNormalization);
  CHECK(kDefaultKappa == 1.0 / 0.07);
}

TEST_CASE("sample_vmf in the uniform limit") {
  for (int dim : {3, 64}) {
    SeedStream rng(11);
    const VecX mean = VecX::Unit(dim, 0);
    VecX acc = VecX::Zero(dim);
    for (int i = 0; i < 100000; ++i) acc += sample_vmf(mean, 0.0, rng);
    CHECK((acc / 100000.0).norm() < 0.02);
  }
}

TEST_CASE("sample_vmf matches the mean resultant length oracle") {
  const int dim = 64;
  const double kappa = 14.29;
  SeedStream rng(3);
  const VecX mean = unit(dim, rng);
  double acc = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const VecX x = sample_vmf(mean, kappa, rng);
    CHECK(std::abs(x.norm() - 1.0) < 1e-12);
    acc += x.dot(mean);
  }
  CHECK(std::abs(acc / 100000.0 - vmf_mean_resultant(dim, kappa)) < 0.01);
  // Cross-check of the oracle itself: A_3(k) = coth k - 1/k.
  CHECK(vmf_mean_resultant(3, 5.0) == doctest::Approx(1.0 / std::tanh(5.0) - 0.2).epsilon(1e-8));
}

TEST_CASE("sample_vmf concentration is monotone and deterministic") {
  for (uint64_t seed : {1, 2, 3}) {
    SeedStream rng(seed);
    const VecX mean = unit(16, rng);
    double previous = -1.0;
    for (double kappa : {0.0, 1.0, 5.0, 15.0}) {
      double acc = 0.0;
      for (int i = 0; i < 10000; ++i) acc += sample_vmf(mean, kappa, rng).dot(mean);
      CHECK(acc / 10000.0 > previous);
      previous = acc / 10000.0;
    }
  }
  SeedStream a(99), b(99);
  const VecX mean = VecX::Unit(5, 4);
  CHECK(sample_vmf(mean, 3.0, a) == sample_vmf(mean, 3.0, b));
  check_error([&] { sample_vmf(mean, -1.0, a); }, ErrorCode::kInvalidConcentration);
}

TEST_CASE("contrastive_loss closed form with orthogonal negatives") {
  const double kappa = 1.0 / 0.07;
  const int m = 100;
  SeedStream rng(8);
  // f = theta = e_z, every negative in the xy-plane.
  MatX bank(m + 1, 3);
  bank.row(0) = Vec3::UnitZ().transpose();
  for (int j = 1; j <= m; ++j) {
    const double a = rng.uniform(0, 2 * M_PI);
    bank.row(j) << std::cos(a), std::sin(a), 0.0;
  }
  AnnotationSet set;
  set.entries.push_back({0, Vec3::UnitZ(), true});
  const double expected = -std::log(std::exp(kappa) / (std::exp(kappa) + m));
  CHECK(contrastive_loss(set, bank, kappa) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(contrastive_loss(set, bank, kappa) == doctest::Approx(6.248554283240004e-05).epsilon(1e-12));

  MatX alone = bank.topRows(1);
  CHECK(contrastive_loss(set, alone, kappa) == 0.0);

  // No visible entry leaves the loss undefined.
  set.entries[0].visible = false;
  check_error([&] { contrastive_loss(set, bank, kappa); }, ErrorCode::kUndefinedLoss);
}

TEST_CASE("contrastive_loss decreases as the positive similarity grows") {
  SeedStream rng(21);
  MatX bank = unit_rows(20, 6, rng);
  const VecX f = unit(6, rng);
  const VecX start = bank.row(4).transpose();
  AnnotationSet set;
  set.entries.push_back({4, f, true});
  double previous = 1e300, previous_sim = -2.0;
  for (double a = 0.0; a <= 1.0; a += 0.1) {
    // Move only the positive theta_4 towards f; the negatives stay fixed.
    bank.row(4) = ((1.0 - a) * start + a * f).normalized().transpose();
    const double sim = bank.row(4).dot(f.transpose());
    const double loss = contrastive_loss(set, bank, kDefaultKappa);
    CHECK(loss >= 0.0);
    CHECK(sim > previous_sim);
    CHECK(loss < previous);
    previous = loss;
    previous_sim = sim;
  }
}

TEST_CASE("contrastive_loss_grad matches central finite differences") {
  SeedStream rng(5);
  const int dim = 8, rows = 30;
  const MatX bank = unit_rows(rows, dim, rng);
  AnnotationSet set;
  for (int k = 0; k < 10; ++k) set.entries.push_back({rng.uniform_int(0, rows - 1), unit(dim, rng), k % 4 != 3});
  const double kappa = kDefaultKappa;
  const auto g = contrastive_loss_grad(set, bank, kappa);
  CHECK(g.loss == doctest::Approx(contrastive_loss(set, bank, kappa)).epsilon(1e-14));

  const double h = 1e-5;
  VecX analytic(set.entries.size() * dim + rows * dim), numeric(analytic.size());
  Eigen::Index n = 0;
  for (size_t k = 0; k < set.entries.size(); ++k) {
    for (int d = 0; d < dim; ++d, ++n) {
      AnnotationSet plus = set, minus = set;
      plus.entries[k].pixel_feature[d] += h;
      minus.entries[k].pixel_feature[d] -= h;
      numeric[n] = (contrastive_loss(plus, bank, kappa) - contrastive_loss(minus, bank, kappa)) / (2 * h);
      analytic[n] = g.d_pixel(static_cast<Eigen::Index>(k), d);
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int d = 0; d < dim; ++d, ++n) {
      MatX plus = bank, minus = bank;
      plus(r, d) += h;
      minus(r, d) -= h;
      numeric[n] = (contrastive_loss(set, plus, kappa) - contrastive_loss(set, minus, kappa)) / (2 * h);
      analytic[n] = g.d_bank(r, d);
    }
  }
  CHECK((analytic - numeric).norm() / numeric.norm() < 1e-5);
  // Invisible entries have an exactly zero pixel gradient.
  for (size_t k = 3; k < set.entries.size(); k += 4) {
    CHECK(g.d_pixel.row(static_cast<Eigen::Index>(k)).norm() == 0.0);
  }
}

TEST_CASE("contrastive_loss_grad vanishes at a perfect match without negatives") {
  MatX bank(1, 4);
  bank << 0.5, 0.5, 0.5, 0.5;
  AnnotationSet set;
  set.entries.push_back({0, bank.row(0).transpose(), true});
  const auto g = contrastive_loss_grad(set, bank, kDefaultKappa);
  CHECK(g.loss == 0.0);
  CHECK(g.d_pixel.norm() == 0.0);
  CHECK(g.d_bank.norm() == 0.0);
}

TEST_CASE("training_loss averages the two maps over objects") {
  SeedStream rng(2);
  const MatX bank = unit_rows(12, 5, rng);
  auto make = [&](int idx) {
    AnnotationSet s;
    s.entries.push_back({idx, unit(5, rng), true});
    return s;
  };
  std::vector<AnnotationSet> mean{make(0)}, deformed{mean[0]};
  const double l0 = contrastive_loss(mean[0], bank, 1.0);
  CHECK(training_loss(mean, deformed, bank, 1.0).total == doctest::Approx(l0).epsilon(1e-14));

  std::vector<AnnotationSet> m2{make(1), make(2)}, d2{make(3), make(4)};
  const double a1 = contrastive_loss(m2[0], bank, 1.0), b1 = contrastive_loss(d2[0], bank, 1.0);
  const double a2 = contrastive_loss(m2[1], bank, 1.0), b2 = contrastive_loss(d2[1], bank, 1.0);
  const auto out = training_loss(m2, d2, bank, 1.0);
  CHECK(out.total == doctest::Approx((a1 + b1 + a2 + b2) / 4.0).epsilon(1e-14));
  CHECK(out.per_object.size() == 2);
  CHECK(out.total == doctest::Approx((out.per_object[0] + out.per_object[1]) / 2).epsilon(1e-12));

  MatX d_bank;
  const auto with_grad = training_loss_grad(m2, d2, bank, 1.0, &d_bank);
  CHECK(with_grad.total == doctest::Approx(out.total).epsilon(1e-14));
  const MatX expected = 0.25 * (contrastive_loss_grad(m2[0], bank, 1.0).d_bank +
                                contrastive_loss_grad(d2[0], bank, 1.0).d_bank +
                                contrastive_loss_grad(m2[1], bank, 1.0).d_bank +
                                contrastive_loss_grad(d2[1], bank, 1.0).d_bank);
  CHECK((d_bank - expected).norm() < 1e-12);

  std::vector<AnnotationSet> short_list{make(5)};
  check_error([&] { training_loss(m2, short_list, bank, 1.0); }, ErrorCode::kInconsistentAnnotation);
}

TEST_CASE("dice_loss") {
  Mask target(10, 10, 0);
  Grid<double> same(10, 10, 0.0), half(10, 10, 0.0), disjoint(10, 10, 0.0);
  for (int y = 2; y < 6; ++y) {
    for (int x = 3; x < 8; ++x) {
      target(x, y) = 1;
      same(x, y) = 1.0;
      half(x, y) = 0.5;
    }
  }
  disjoint(0, 0) = 1.0;
  CHECK(dice_loss(same, target) <= 1e-7);
  CHECK(dice_loss(disjoint, target) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(dice_loss(half, target) == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
  CHECK(mask_loss(same, target, half, target) == doctest::Approx(0.5 * (dice_loss(same, target) + 1.0 / 3.0)));
  check_error([&] { dice_loss(Grid<double>(3, 3), target); }, ErrorCode::kShapeMismatch);
}

TEST_CASE("minmax_normalize") {
  Grid<double> g(3, 1);
  g.data = {0.0, 5.0, 10.0};
  CHECK(minmax_normalize(g).data == std::vector<double>{0.0, 0.5, 1.0});
  Grid<double> c(4, 2, 3.5);
  for (double v : minmax_normalize(c).data) CHECK(v == 0.0);
  SeedStream rng(1);
  Grid<double> r(5, 5);
  for (auto& v : r.data) v = rng.normal();
  const auto n = minmax_normalize(r);
  CHECK(*std::min_element(n.data.begin(), n.data.end()) == 0.0);
  CHECK(*std::max_element(n.data.begin(), n.data.end()) == 1.0);
  check_error([] { minmax_normalize(Grid<double>()); }, ErrorCode::kEmptyInput);
}

TEST_CASE("FeatureMap geometry") {
  FeatureMap map(8, 6, 4, 3);
  CHECK(map.num_cells() == 48);
  CHECK(map.cell_center(0) == Vec2(2, 2));
  CHECK(map.cell_center(9) == Vec2(6, 6));
  CHECK(map.cell_at(Vec2(6.0, 6.0)) == 9);
  CHECK(map.cell_at(Vec2(3.999, 0.0)) == 0);
  CHECK(map.cell_at(Vec2(4.0, 0.0)) == 1);
  CHECK(map.cell_at(Vec2(-0.1, 0.0)) == -1);
  CHECK(map.cell_at(Vec2(32.0, 0.0)) == -1);
  map.features.setZero();
  map.features.col(0).setOnes();
  map.validate();
  map.heatmap(2, 2) = 1.5f;
  check_error([&] { map.validate(); }, ErrorCode::kInvalidArgument);
}

PrototypeSet small_prototypes(int dim, uint64_t seed) {
  PrototypeSet set;
  set.add(build_prototype("mug", Vec3(0.14, 0.10, 0.10), 40.0, dim, seed));
  set.add(build_prototype("bowl", Vec3(0.17, 0.08, 0.17), 40.0, dim, seed + 1));
  set.add(build_prototype("can", Vec3(0.07, 0.12, 0.07), 40.0, dim, seed + 2));
  return set;
}

TEST_CASE("match_correspondences finds an exact vertex") {
  const PrototypeSet protos = small_prototypes(16, 3);
  FeatureMap map(4, 4, 4, 16);
  SeedStream rng(1);
  for (int c = 0; c < map.num_cells(); ++c) map.features.row(c) = unit(16, rng).cast<float>().transpose();
  map.heatmap = Grid<float>(4, 4, 0.0f);
  map.features.row(5) = protos.at("mug").features.row(17).cast<float>();
  map.heatmap.data[5] = 1.0f;
  const auto out = match_correspondences(map, protos, 0.5, 0.7);
  REQUIRE(out.size() == 1);
  CHECK(out[0].category == "mug");
  CHECK(out[0].vertex_index == 17);
  CHECK(out[0].similarity == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out[0].cell == 5);
  CHECK(out[0].pixel == map.cell_center(5));

  map.heatmap.data[5] = 0.4f;
  CHECK(match_correspondences(map, protos, 0.5, 0.7).empty());
  check_error([&] { match_correspondences(map, PrototypeSet(), 0.5, 0.7); }, ErrorCode::kMissingPrototype);
  check_error([&] { match_correspondences(map, protos, 1.5, 0.7); }, ErrorCode::kInvalidArgument);
}

TEST_CASE("match_correspondences equals a brute-force double loop") {
  const int dim = 6;
  const PrototypeSet protos = small_prototypes(dim, 9);
  FeatureMap map(8, 8, 4, dim);
  SeedStream rng(17);
  for (int c = 0; c < map.num_cells(); ++c) {
    // Half the cells copy a noisy vertex feature so that t2 keeps some.
    VecX f = unit(dim, rng);
    if (c % 2 == 0) {
      const auto& p = protos[static_cast<size_t>(c / 2) % protos.size()];
      f = (p.features.row(c % p.num_vertices()).transpose() + 0.1 * unit(dim, rng)).normalized();
    }
    map.features.row(c) = f.cast<float>().transpose();
    map.heatmap.data[static_cast<size_t>(c)] = static_cast<float>(rng.uniform());
  }
  const double t1 = 0.3, t2 = 0.6;
  std::vector<std::tuple<int, std::string, int>> oracle;
  for (int c = 0; c < map.num_cells(); ++c) {
    if (map.heatmap.data[static_cast<size_t>(c)] < t1) continue;
    const VecX f = map.features.row(c).cast<double>().transpose();
    double best = -2.0;
    std::string best_cat;
    int best_v = -1;
    for (const auto& p : protos) {
      for (int v = 0; v < p.num_vertices(); ++v) {
        const double s = f.dot(p.features.row(v).transpose());
        if (s > best) {
          best = s;
          best_cat = p.category;
          best_v = v;
        }
      }
    }
    if (best >= t2) oracle.emplace_back(c, best_cat, best_v);
  }
  const auto out = match_correspondences(map, protos, t1, t2);
  REQUIRE(out.size() == oracle.size());
  CHECK(!oracle.empty());
  for (size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].cell == std::get<0>(oracle[i]));
    CHECK(out[i].category == std::get<1>(oracle[i]));
    CHECK(out[i].vertex_index == std::get<2>(oracle[i]));
  }
}

TEST_CASE("match_correspondences breaks ties towards the smallest key") {
  PrototypeSet protos = small_prototypes(4, 1);
  // Give "mug" vertex 3 and "bowl" vertex 8 the same feature; bowl sorts first.
  std::vector<CategoryPrototype> edited(protos.begin(), protos.end());
  const Eigen::RowVectorXd tie = Eigen::RowVectorXd::Unit(4, 1);
  for (auto& p : edited) {
    if (p.category == "mug") p.features.row(3) = tie;
    if (p.category == "bowl") p.features.row(8) = tie;
  }
  const PrototypeSet tied(edited);
  FeatureMap map(1, 1, 4, 4);
  map.features.row(0) = tie.cast<float>();
  map.heatmap.data[0] = 1.0f;
  const auto out = match_correspondences(map, tied, 0.5, 0.7);
  REQUIRE(out.size() == 1);
  CHECK(out[0].category == "bowl");
  CHECK(out[0].vertex_index == 8);
}

TEST_CASE("FeatureBank stacks prototypes in canonical order") {
  PrototypeSet protos = small_prototypes(5, 2);
  const auto bank = FeatureBank::from(protos);
  CHECK(bank.categories == std::vector<std::string>{"bowl", "can", "mug"});
  CHECK(bank.offset("can") == protos.at("bowl").num_vertices());
  CHECK(bank.features.row(bank.offset("mug") + 2) == protos.at("mug").features.row(2));
}

}  // namespace
}  // namespace meshpose
