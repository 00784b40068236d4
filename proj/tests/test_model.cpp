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
#include <filesystem>

#include "doctest.h"
#include "otafl/datagen.hpp"
#include "otafl/model.hpp"

using namespace otafl;

namespace {

ClientShard make_shard(int n, int m, int classes, double sep, std::uint64_t seed) {
  return ClientShard{gen_synthetic_classification(n, m, classes, sep, seed), 0, 1.0};
}

ParamVector random_theta(int d, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  ParamVector theta(static_cast<std::size_t>(d));
  for (auto& v : theta.values) v = scale * rng.normal();
  return theta;
}

// Independent scalar-loop cross-entropy: naive per-sample softmax for the
// logistic layout, no shared code with the library's forward pass.
double naive_logistic_loss(const ParamVector& theta, const Dataset& ds) {
  const int m = ds.m, C = ds.num_classes;
  double total = 0.0;
  for (int i = 0; i < ds.n; ++i) {
    double denom = 0.0, zy = 0.0;
    for (int c = 0; c < C; ++c) {
      double z = theta[static_cast<std::size_t>(C) * m + c];  // bias
      for (int j = 0; j < m; ++j) z += theta[static_cast<std::size_t>(c) * m + j] * ds.row(i)[j];
      denom += std::exp(z);
      if (c == ds.labels[i]) zy = z;
    }
    total += std::log(denom) - zy;
  }
  return total / ds.n;
}

// Central finite differences of an arbitrary scalar objective.
template <typename F>
ParamVector finite_diff(const ParamVector& theta, F&& objective, double step) {
  ParamVector g(theta.size());
  ParamVector probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe.values[i] = theta[i] + step;
    double hi = objective(probe);
    probe.values[i] = theta[i] - step;
    double lo = objective(probe);
    probe.values[i] = theta[i];
    g.values[i] = (hi - lo) / (2 * step);
  }
  return g;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

const ModelSpec kLogistic{ModelKind::MulticlassLogistic, 4, 3, {}, Activation::Tanh};
const ModelSpec kMlp{ModelKind::Mlp, 4, 3, {5}, Activation::Tanh};

}  // namespace

TEST_SUITE("model") {

TEST_CASE("zero parameters predict uniformly: loss = ln C") {
  auto shard2 = make_shard(40, 4, 2, 1.0, 3);
  ModelSpec spec2{ModelKind::MulticlassLogistic, 4, 2, {}, Activation::Tanh};
  ParamVector zero2(static_cast<std::size_t>(spec2.param_count()));
  CHECK(local_loss(zero2, shard2, spec2) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto shard10 = make_shard(50, 4, 10, 1.0, 4);
  ModelSpec spec10{ModelKind::MulticlassLogistic, 4, 10, {}, Activation::Tanh};
  ParamVector zero10(static_cast<std::size_t>(spec10.param_count()));
  CHECK(local_loss(zero10, shard10, spec10) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("loss matches an independent per-sample recomputation") {
  auto shard = make_shard(12, 4, 3, 1.5, 8);
  ParamVector theta = random_theta(kLogistic.param_count(), 17);
  double lib = local_loss(theta, shard, kLogistic);
  double naive = naive_logistic_loss(theta, shard.data);
  CHECK(lib == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("gradients match central finite differences for both kinds") {
  for (const ModelSpec& spec : {kLogistic, kMlp}) {
    auto shard = make_shard(20, 4, 3, 1.2, 31);
    REQUIRE(spec.param_count() <= 50);
    for (int trial = 0; trial < 10; ++trial) {
      ParamVector theta = random_theta(spec.param_count(), 100 + trial);
      ParamVector analytic = local_grad(theta, shard, spec);
      ParamVector numeric = finite_diff(
          theta, [&](const ParamVector& p) { return local_loss(p, shard, spec); }, 1e-5);
      CHECK(max_abs_diff(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("gradient vanishes at a fitted optimum") {
  auto shard = make_shard(30, 4, 3, 2.0, 5);
  ParamVector zero(static_cast<std::size_t>(kLogistic.param_count()));
  // lambda > 0 keeps the logistic problem strongly convex, so the solver
  // reaches true stationarity.
  auto fit = prox_minimize_gd(shard, zero, zero, 0.1, kLogistic, 4000, 1e-9);
  CHECK(norm(prox_grad(fit.theta, zero, 0.1, shard, kLogistic)) < 1e-6);
}

TEST_CASE("mean gradient is invariant under shard duplication") {
  auto shard = make_shard(10, 4, 3, 1.0, 12);
  ClientShard doubled = shard;
  doubled.data.n = 2 * shard.data.n;
  doubled.data.labels.insert(doubled.data.labels.end(), shard.data.labels.begin(),
                             shard.data.labels.end());
  doubled.data.features.insert(doubled.data.features.end(), shard.data.features.begin(),
                               shard.data.features.end());
  ParamVector theta = random_theta(kLogistic.param_count(), 21);
  CHECK(max_abs_diff(local_grad(theta, shard, kLogistic),
                     local_grad(theta, doubled, kLogistic)) < 1e-14);
}

TEST_CASE("proximal objective identities") {
  auto shard = make_shard(15, 4, 3, 1.0, 9);
  ParamVector theta = random_theta(kLogistic.param_count(), 33);
  ParamVector ref = random_theta(kLogistic.param_count(), 34);

  CHECK(prox_objective(theta, theta, 3.7, shard, kLogistic) ==
        local_loss(theta, shard, kLogistic));
  CHECK(prox_objective(theta, ref, 0.0, shard, kLogistic) ==
        local_loss(theta, shard, kLogistic));

  // lambda=2 and ||theta - ref||^2 = 9 adds exactly 9.
  ParamVector ref9 = theta;
  ref9.values[0] += 3.0;
  CHECK(prox_objective(theta, ref9, 2.0, shard, kLogistic) ==
        doctest::Approx(local_loss(theta, shard, kLogistic) + 9.0).epsilon(1e-12));
}

TEST_CASE("proximal gradient identities and finite differences") {
  auto shard = make_shard(15, 4, 3, 1.0, 10);
  ParamVector theta = random_theta(kLogistic.param_count(), 43);
  ParamVector ref = random_theta(kLogistic.param_count(), 44);

  CHECK(max_abs_diff(prox_grad(theta, ref, 0.0, shard, kLogistic),
                     local_grad(theta, shard, kLogistic)) == 0.0);
  CHECK(max_abs_diff(prox_grad(theta, theta, 5.0, shard, kLogistic),
                     local_grad(theta, shard, kLogistic)) == 0.0);

  const double lambda = 0.8;
  ParamVector numeric = finite_diff(
      theta,
      [&](const ParamVector& p) { return prox_objective(p, ref, lambda, shard, kLogistic); },
      1e-5);
  CHECK(max_abs_diff(prox_grad(theta, ref, lambda, shard, kLogistic), numeric) < 1e-4);
}

TEST_CASE("h is lambda-strongly convex for the logistic kind") {
  auto shard = make_shard(25, 4, 3, 1.5, 14);
  const double lambda = 0.6;
  for (int trial = 0; trial < 20; ++trial) {
    ParamVector a = random_theta(kLogistic.param_count(), 200 + trial);
    ParamVector b = random_theta(kLogistic.param_count(), 300 + trial);
    ParamVector ref = random_theta(kLogistic.param_count(), 400 + trial);
    double ha = prox_objective(a, ref, lambda, shard, kLogistic);
    double hb = prox_objective(b, ref, lambda, shard, kLogistic);
    ParamVector ga = prox_grad(a, ref, lambda, shard, kLogistic);
    ParamVector diff = sub(b, a);
    CHECK(hb >= ha + dot(ga, diff) + 0.5 * lambda * norm_sq(diff) - 1e-9);
  }
}

TEST_CASE("noisy-SGD regularizer equals the proximal term at lambda = 2*lam_tilde") {
  auto shard = make_shard(15, 4, 3, 1.0, 16);
  for (int trial = 0; trial < 10; ++trial) {
    ParamVector theta = random_theta(kLogistic.param_count(), 500 + trial);
    ParamVector prev = random_theta(kLogistic.param_count(), 600 + trial);
    const double lam_tilde = 0.15 + 0.1 * trial;
    double lhs = prox_objective(theta, prev, 2.0 * lam_tilde, shard, kLogistic) -
                 local_loss(theta, shard, kLogistic);
    CHECK(lhs == doctest::Approx(lam_tilde * norm_sq(sub(theta, prev))).epsilon(1e-12));
  }
}

TEST_CASE("sgd with a dominant proximal term stays near the anchor") {
  auto shard = make_shard(30, 4, 3, 1.0, 19);
  ProxConfig cfg{1e6, 1e-7, 3, 8};
  ParamVector init = random_theta(kLogistic.param_count(), 7);
  ParamVector out = local_solve_sgd(shard, init, cfg, 3, kLogistic, 99);
  CHECK(norm(sub(out, init)) < 1e-4);
}

TEST_CASE("sgd approaches the full-batch reference on a convex problem") {
  auto shard = make_shard(40, 4, 3, 2.0, 23);
  ProxConfig cfg{0.5, 0.1, 400, 40};  // full batch
  ParamVector init(static_cast<std::size_t>(kLogistic.param_count()));
  ParamVector out = local_solve_sgd(shard, init, cfg, 400, kLogistic, 5);
  CHECK(norm(prox_grad(out, init, 0.5, shard, kLogistic)) < 1e-3);
  auto oracle = prox_minimize_gd(shard, init, init, 0.5, kLogistic, 4000, 1e-9);
  CHECK(prox_objective(out, init, 0.5, shard, kLogistic) -
            prox_objective(oracle.theta, init, 0.5, shard, kLogistic) <
        1e-5);
}

TEST_CASE("sgd is bitwise deterministic and extends epoch prefixes") {
  auto shard = make_shard(30, 4, 3, 1.0, 29);
  ProxConfig cfg{0.4, 0.05, 8, 8};
  ParamVector init = random_theta(kLogistic.param_count(), 3);
  ParamVector a = local_solve_sgd(shard, init, cfg, 5, kLogistic, 1234);
  ParamVector b = local_solve_sgd(shard, init, cfg, 5, kLogistic, 1234);
  CHECK(a.values == b.values);
  ParamVector c = local_solve_sgd(shard, init, cfg, 5, kLogistic, 1235);
  CHECK(a.values != c.values);
}

TEST_CASE("sgd divergence reports the epoch") {
  // Cross-entropy gradients are bounded, so blow-up needs the proximal
  // term: with eta*lambda >> 1 the anchored update overflows in two steps.
  auto shard = make_shard(30, 4, 3, 4.0, 31);
  ProxConfig cfg{0.5, 1e200, 6, 30};
  ParamVector init = random_theta(kLogistic.param_count(), 77, 10.0);
  try {
    local_solve_sgd(shard, init, cfg, 6, kLogistic, 2);
    FAIL("expected DivergedError");
  } catch (const DivergedError& e) {
    CHECK(e.epoch() <= 1);  // first step is -eta*g; the anchor overflows next
  }
}

TEST_CASE("gamma: zero at the surrogate minimizer, one at the reference") {
  auto shard = make_shard(30, 4, 3, 2.0, 37);
  ParamVector ref = random_theta(kLogistic.param_count(), 11);
  auto star = prox_minimize_gd(shard, ref, ref, 0.7, kLogistic, 4000, 1e-10);
  auto rep = measure_gamma(star.theta, ref, 0.7, shard, kLogistic);
  CHECK(rep.gamma_hat <= 1e-6);
  CHECK(!rep.stationary_reference);

  auto identity = measure_gamma(ref, ref, 0.0, shard, kLogistic);
  CHECK(identity.gamma_hat == 1.0);
}

TEST_CASE("gamma flags a stationary reference") {
  // Two samples with identical features and opposite labels make theta = 0
  // exactly stationary for the symmetric two-class logistic loss.
  Dataset ds;
  ds.n = 2;
  ds.m = 2;
  ds.num_classes = 2;
  ds.features = {0.3, -1.1, 0.3, -1.1};
  ds.labels = {0, 1};
  ClientShard shard{ds, 0, 1.0};
  ModelSpec spec{ModelKind::MulticlassLogistic, 2, 2, {}, Activation::Tanh};
  ParamVector zero(static_cast<std::size_t>(spec.param_count()));
  auto rep = measure_gamma(zero, zero, 0.5, shard, spec);
  CHECK(rep.stationary_reference);
}

TEST_CASE("gamma shrinks with more local epochs") {
  auto shard = make_shard(60, 4, 3, 2.0, 43);
  ProxConfig cfg{0.4, 0.05, 8, 16};
  ParamVector ref = random_theta(kLogistic.param_count(), 13);
  ParamVector one = local_solve_sgd(shard, ref, cfg, 1, kLogistic, 500);
  ParamVector five = local_solve_sgd(shard, ref, cfg, 5, kLogistic, 500);
  double g1 = measure_gamma(one, ref, 0.4, shard, kLogistic).gamma_hat;
  double g5 = measure_gamma(five, ref, 0.4, shard, kLogistic).gamma_hat;
  CHECK(g5 <= g1);
}

TEST_CASE("zeta: zero at the oracle, the objective gap at the reference") {
  auto shard = make_shard(40, 4, 3, 2.0, 47);
  ParamVector ref = random_theta(kLogistic.param_count(), 15);
  const double lambda = 0.5;
  auto star = prox_minimize_gd(shard, ref, ref, lambda, kLogistic, 4000, 1e-10);
  CHECK(measure_zeta(star.theta, ref, lambda, shard, kLogistic, 4000) <= 1e-10);

  double zeta_ref = measure_zeta(ref, ref, lambda, shard, kLogistic, 4000);
  double direct = prox_objective(ref, ref, lambda, shard, kLogistic) -
                  prox_objective(star.theta, ref, lambda, shard, kLogistic);
  CHECK(zeta_ref == doctest::Approx(direct).epsilon(1e-9));
  CHECK(zeta_ref >= 0.0);
}

TEST_CASE("zeta decreases as the epoch budget grows") {
  auto shard = make_shard(60, 4, 3, 2.0, 53);
  ProxConfig cfg{0.4, 0.05, 8, 16};
  ParamVector ref = random_theta(kLogistic.param_count(), 19);
  double prev = std::numeric_limits<double>::infinity();
  for (int epochs : {1, 2, 4, 8}) {
    ParamVector out = local_solve_sgd(shard, ref, cfg, epochs, kLogistic, 321);
    double zeta = measure_zeta(out, ref, 0.4, shard, kLogistic, 4000);
    CHECK(zeta <= prev);
    prev = zeta;
  }
}

TEST_CASE("zeta raises when the reference solve cannot converge") {
  auto shard = make_shard(40, 4, 3, 2.0, 59);
  ParamVector ref = random_theta(kLogistic.param_count(), 23);
  // A two-iteration budget cannot push ||grad h|| under 1e-5.
  CHECK_THROWS_AS(measure_zeta(ref, ref, 0.5, shard, kLogistic, 2), OracleError);
}

TEST_CASE("checkpoint round trip is exact") {
  ModelSpec spec{ModelKind::Mlp, 6, 4, {5, 3}, Activation::Tanh};
  ParamVector theta = random_theta(spec.param_count(), 61);
  save_checkpoint("ckpt.bin", "ckpt.json", theta, spec);
  auto [back, spec2] = load_checkpoint("ckpt.bin", "ckpt.json");
  CHECK(back.values == theta.values);
  CHECK(spec2.kind == spec.kind);
  CHECK(spec2.hidden == spec.hidden);
  std::filesystem::remove("ckpt.bin");
  std::filesystem::remove("ckpt.json");
}

TEST_CASE("dimension mismatches are rejected") {
  auto shard = make_shard(10, 4, 3, 1.0, 67);
  ParamVector wrong(3);
  CHECK_THROWS_AS(local_loss(wrong, shard, kLogistic), std::invalid_argument);
  ParamVector theta = random_theta(kLogistic.param_count(), 1);
  ParamVector short_ref(2);
  CHECK_THROWS_AS(prox_objective(theta, short_ref, 1.0, shard, kLogistic),
                  std::invalid_argument);
}

}  // TEST_SUITE
