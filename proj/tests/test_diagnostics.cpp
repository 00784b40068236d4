// Copyright 2026 The otafl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include "doctest.h"
#include "otafl/diagnostics.hpp"

using namespace otafl;

namespace {

// Brute-force reference for the envelope fit: scan b on a fine grid, take
// the minimal feasible h at each b, minimize b + h with ties to smaller b.
std::pair<double, double> grid_envelope(const std::vector<LgdPoint>& pts, double step) {
  double b_max = 0.0;
  for (const auto& p : pts)
    if (p.global_sq > 0) b_max = std::max(b_max, p.local_sq / p.global_sq);
  double best_obj = std::numeric_limits<double>::infinity();
  double best_b = 0.0, best_h = 0.0;
  for (double b = 0.0; b <= b_max + step; b += step) {
    double h = 0.0;
    for (const auto& p : pts) h = std::max(h, p.local_sq - b * p.global_sq);
    if (b + h < best_obj - 1e-12) {
      best_obj = b + h;
      best_b = b;
      best_h = h;
    }
  }
  return {best_b, best_h};
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("global gradient norm: single client and definitional identity") {
  Dataset ds = gen_synthetic_classification(60, 3, 2, 2.0, 5);
  ModelSpec spec{ModelKind::MulticlassLogistic, 3, 2, {}, Activation::Tanh};
  ClientShard whole{ds, 0, 1.0};

  Rng rng(9);
  ParamVector theta(static_cast<std::size_t>(spec.param_count()));
  for (auto& v : theta.values) v = 0.4 * rng.normal();

  CHECK(global_grad_norm_sq(theta, {whole}, spec) ==
        doctest::Approx(norm_sq(local_grad(theta, whole, spec))).epsilon(1e-12));

  // Multi-client value equals ||mean of local gradients||^2.
  auto part = partition_heterogeneous(ds, {3, 1.0, 11});
  ParamVector mean(theta.size());
  for (const auto& shard : part.shards)
    add_scaled(mean, 1.0 / 3, local_grad(theta, shard, spec));
  CHECK(global_grad_norm_sq(theta, part.shards, spec) ==
        doctest::Approx(norm_sq(mean)).epsilon(1e-12));
}

TEST_CASE("global gradient vanishes at a fitted optimum") {
  Dataset ds = gen_synthetic_classification(60, 3, 2, 1.5, 6);
  ModelSpec spec{ModelKind::MulticlassLogistic, 3, 2, {}, Activation::Tanh};
  ClientShard whole{ds, 0, 1.0};
  ParamVector zero(static_cast<std::size_t>(spec.param_count()));
  auto fit = prox_minimize_gd(whole, zero, zero, 0.0, spec, 8000, 1e-5);
  CHECK(global_grad_norm_sq(fit.theta, {whole}, spec) < 1e-6);
}

TEST_CASE("estimate_BH: y = x trajectories give B=1, H=0") {
  std::vector<LgdPoint> pts = {{0.25, 0.25}, {1.0, 1.0}, {4.0, 4.0}};
  LGDEstimate est = estimate_BH(pts);
  CHECK(est.B_hat == doctest::Approx(1.0));
  CHECK(est.H_hat == doctest::Approx(0.0));
  CHECK(est.max_violation <= 1e-9);
}

TEST_CASE("estimate_BH: worked two-point envelope") {
  // Points (x, y) = (1, 2) and (4, 5): constraint lines cross at b = 1,
  // h = 1.
  std::vector<LgdPoint> pts = {{2.0, 1.0}, {5.0, 4.0}};
  LGDEstimate est = estimate_BH(pts);
  CHECK(est.B_hat * est.B_hat == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(est.H_hat * est.H_hat == doctest::Approx(1.0).epsilon(1e-9));

  auto [gb, gh] = grid_envelope(pts, 1e-3);
  CHECK(std::abs(est.B_hat * est.B_hat - gb) <= 2e-3);
  CHECK(std::abs(est.H_hat * est.H_hat - gh) <= 2e-3);
}

TEST_CASE("estimate_BH: degenerate identical points") {
  std::vector<LgdPoint> pts = {{3.0, 2.0}, {3.0, 2.0}, {3.0, 2.0}};
  LGDEstimate est = estimate_BH(pts);
  CHECK(est.B_hat == 0.0);
  CHECK(est.H_hat == doctest::Approx(std::sqrt(3.0)));
  CHECK(est.max_violation <= 1e-9);
}

TEST_CASE("estimate_BH agrees with exhaustive grid search on random instances") {
  Rng rng(71);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(18));  // <= 20 points
    std::vector<LgdPoint> pts;
    for (int i = 0; i < n; ++i) {
      double x = 0.05 + 4.0 * rng.uniform();
      double y = (0.2 + 1.5 * rng.uniform()) * x + 2.0 * rng.uniform();
      pts.push_back({y, x});
    }
    LGDEstimate est = estimate_BH(pts);
    CHECK(est.max_violation <= 1e-9);  // envelope validity
    auto [gb, gh] = grid_envelope(pts, 1e-3);
    CHECK(est.B_hat * est.B_hat + est.H_hat * est.H_hat <= gb + gh + 1e-9);
    CHECK(std::abs(est.B_hat * est.B_hat - gb) <= 2e-3);
    CHECK(std::abs(est.H_hat * est.H_hat - gh) <= 2e-3);
  }
}

TEST_CASE("precoding bound check: vacuous bound and violation lists") {
  std::vector<std::pair<double, double>> rounds = {{1.0, 0.5}, {1.0, 0.1}, {1.0, 2.0}};
  BoundCheck vacuous = check_precoding_bound(rounds, 1000.0, 1000.0, 1.0);
  CHECK(vacuous.fraction == 1.0);
  CHECK(vacuous.violating_rounds.empty());

  // 1/p = 10 > (1*0.5 + 0.1)/1: violated on the first round only.
  std::vector<std::pair<double, double>> tight = {{0.1, 0.5}, {100.0, 0.5}};
  BoundCheck strict = check_precoding_bound(tight, 1.0, std::sqrt(0.1), 1.0);
  CHECK(strict.fraction == doctest::Approx(0.5));
  REQUIRE(strict.violating_rounds.size() == 1);
  CHECK(strict.violating_rounds[0] == 0);

  // Skipped rounds (p_t = 0) are ignored.
  std::vector<std::pair<double, double>> with_skip = {{0.0, 0.5}, {100.0, 0.5}};
  CHECK(check_precoding_bound(with_skip, 1.0, 1.0, 1.0).fraction == 1.0);

  BoundCheck zeroth = check_precoding_bound_zeroth({0.5, 2.0}, 2.0, 1.0);
  CHECK(zeroth.fraction == 1.0);
}

TEST_CASE("fit_rate recovers synthetic decay exponents") {
  std::vector<double> inv_t(400), inv_sqrt(400);
  for (int t = 1; t <= 400; ++t) {
    inv_t[t - 1] = 3.7 / t;
    inv_sqrt[t - 1] = 0.9 / std::sqrt(static_cast<double>(t));
  }
  RateFit a = fit_rate(inv_t);
  CHECK(a.slope == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(a.r2 > 0.999);
  RateFit b = fit_rate(inv_sqrt);
  CHECK(b.slope == doctest::Approx(-0.5).epsilon(0.01));

  // Nonpositive values are filtered and counted.
  std::vector<double> with_zeros = inv_t;
  with_zeros[5] = 0.0;
  with_zeros[17] = -1.0;
  RateFit c = fit_rate(with_zeros);
  CHECK(c.filtered == 2);
  CHECK(c.window == 398);
  CHECK(c.slope == doctest::Approx(-1.0).epsilon(0.02));

  CHECK_THROWS_AS(fit_rate(std::vector<double>(5, 1.0)), std::invalid_argument);
}

TEST_CASE("running mean of a summable series decays like 1/t") {
  std::vector<double> geometric(300);
  for (int t = 0; t < 300; ++t) geometric[t] = std::pow(0.5, t) + 1e-12;
  RateFit fit = fit_rate(running_mean(geometric));
  CHECK(fit.slope < -0.9);
}

TEST_CASE("accuracy: uniform logits predict the lowest class") {
  Dataset ds = gen_synthetic_classification(90, 4, 3, 2.0, 12);
  ModelSpec spec{ModelKind::MulticlassLogistic, 4, 3, {}, Activation::Tanh};
  ParamVector zero(static_cast<std::size_t>(spec.param_count()));
  int class0 = 0;
  for (int y : ds.labels)
    if (y == 0) ++class0;
  CHECK(evaluate_accuracy(zero, ds, spec) ==
        doctest::Approx(static_cast<double>(class0) / ds.n));

  // Duplicated test set: identical accuracy.
  Dataset doubled = ds;
  doubled.n *= 2;
  doubled.labels.insert(doubled.labels.end(), ds.labels.begin(), ds.labels.end());
  doubled.features.insert(doubled.features.end(), ds.features.begin(), ds.features.end());
  Rng rng(3);
  ParamVector theta(zero.size());
  for (auto& v : theta.values) v = rng.normal();
  CHECK(evaluate_accuracy(theta, ds, spec) == evaluate_accuracy(theta, doubled, spec));

  CHECK_THROWS_AS(evaluate_accuracy(zero, Dataset{}, spec), std::invalid_argument);
}

TEST_CASE("accuracy reaches 1.0 on a well-separated fitted problem") {
  Dataset ds = gen_synthetic_classification(90, 5, 3, 8.0, 2);
  ModelSpec spec{ModelKind::MulticlassLogistic, 5, 3, {}, Activation::Tanh};
  ClientShard whole{ds, 0, 1.0};
  ParamVector zero(static_cast<std::size_t>(spec.param_count()));
  auto fit = prox_minimize_gd(whole, zero, zero, 0.0, spec, 3000, 1e-7);
  CHECK(evaluate_accuracy(fit.theta, ds, spec) == 1.0);
}

}  // TEST_SUITE
