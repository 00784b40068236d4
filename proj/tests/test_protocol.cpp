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
#include <set>

#include "doctest.h"
#include "otafl/protocol.hpp"

using namespace otafl;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.clients = 4;
  cfg.max_epochs = 2;
  cfg.rounds = 6;
  cfg.lambda = 0.3;
  cfg.eta = 0.05;
  cfg.batch = 16;
  cfg.pi = 1.0;
  cfg.channel.power = 1.0;
  cfg.channel.sigma2 = 0.0;
  cfg.data.n = 200;
  cfg.data.features = 3;
  cfg.data.classes = 2;
  cfg.data.separation = 2.0;
  cfg.master_seed = 7;
  return cfg;
}

// Every per-round trajectory point, for bitwise comparisons.
std::vector<ParamVector> trajectory(const RunConfig& cfg) {
  RunConfig resolved = variant_config(cfg.variant, cfg);
  validate_run_config(resolved);
  TrainState st = init_train_state(resolved);
  std::vector<ParamVector> thetas;
  for (int t = 1; t <= resolved.rounds; ++t) {
    run_round(st, t);
    thetas.push_back(st.theta);
  }
  return thetas;
}

bool same_trajectory(const std::vector<ParamVector>& a, const std::vector<ParamVector>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].values != b[i].values) return false;
  return true;
}

}  // namespace

TEST_SUITE("protocol") {

TEST_CASE("variant_config applies each baseline's overrides") {
  RunConfig base = small_config();
  base.channel.sigma2 = 0.1;
  base.lambda = 0.4;

  RunConfig fedprox = variant_config(ProtocolVariant::FedProx, base);
  CHECK(fedprox.channel.sigma2 == 0.0);
  CHECK(fedprox.channel.precoding == PrecodingMode::Unit);
  CHECK(fedprox.lambda == 0.4);

  RunConfig cotaf = variant_config(ProtocolVariant::Cotaf, base);
  CHECK(cotaf.lambda == 0.0);
  CHECK(cotaf.straggler.policy == StragglerPolicy::Drop);
  CHECK(cotaf.channel.sigma2 == 0.1);

  RunConfig noisyprox = variant_config(ProtocolVariant::NoisyProx, base);
  CHECK(noisyprox.channel.precoding == PrecodingMode::Unit);
  CHECK(noisyprox.channel.sigma2 == 0.1);

  RunConfig noisyfedavg = variant_config(ProtocolVariant::NoisyFedAvg, base);
  CHECK(noisyfedavg.lambda == 0.0);
  CHECK(noisyfedavg.channel.precoding == PrecodingMode::Unit);
  CHECK(noisyfedavg.straggler.policy == StragglerPolicy::Drop);

  RunConfig robust = variant_config(ProtocolVariant::RobustComm, base);
  CHECK(robust.lambda == 0.1);

  // RobustComm after SNR resolution: sigma2 = P/(d tau).
  RunConfig snr_base = small_config();
  snr_base.channel.sigma2 = 0.0;
  snr_base.model.input_dim = 0;  // derive from data: m=3, C=2, d=8
  snr_base.model.num_classes = 0;
  snr_base.snr_db = 0.0;
  RunConfig robust2 = variant_config(ProtocolVariant::RobustComm, snr_base);
  CHECK(robust2.lambda == doctest::Approx(1.0 / 8.0));
  CHECK(robust2.channel.sigma2 == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("config validation names the offending field") {
  RunConfig cfg = small_config();
  cfg.subset_size = 9;
  try {
    validate_run_config(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "K_hat");
  }

  RunConfig bad_pi = small_config();
  bad_pi.pi = 1.5;
  CHECK_THROWS_AS(validate_run_config(bad_pi), ConfigError);

  RunConfig exclusive = small_config();
  exclusive.subset_size = 2;
  exclusive.channel.fading = true;
  exclusive.channel.r_hat = 0.5;
  CHECK_THROWS_AS(validate_run_config(exclusive), ConfigError);
}

TEST_CASE("assign_stragglers: counts, ranges, determinism") {
  StragglerModel none{0.0, StragglerPolicy::IncludePartial, false};
  auto all_full = assign_stragglers(10, none, 3, 1, 99);
  for (int e : all_full) CHECK(e == 3);

  StragglerModel all{1.0, StragglerPolicy::IncludePartial, false};
  auto everyone = assign_stragglers(10, all, 3, 1, 99);
  for (int e : everyone) CHECK((e == 1 || e == 2));

  StragglerModel half{0.5, StragglerPolicy::IncludePartial, false};
  std::vector<int> straggle_count(30, 0);
  for (int t = 1; t <= 1000; ++t) {
    auto epochs = assign_stragglers(30, half, 3, t, 1234);
    int n = 0;
    for (int k = 0; k < 30; ++k)
      if (epochs[k] < 3) {
        ++n;
        straggle_count[k] += 1;
      }
    CHECK(n == 15);  // round(0.5 * 30) per round, exactly
  }
  for (int k = 0; k < 30; ++k) {
    CHECK(straggle_count[k] >= 450);
    CHECK(straggle_count[k] <= 550);
  }

  // E = 1 leaves everyone at one epoch and warns.
  std::vector<std::string> warnings;
  StragglerModel impossible{0.5, StragglerPolicy::IncludePartial, false};
  auto ones = assign_stragglers(4, impossible, 1, 1, 5, &warnings);
  for (int e : ones) CHECK(e == 1);
  CHECK(!warnings.empty());

  // fixed_set freezes membership while epochs still vary.
  StragglerModel fixed{0.5, StragglerPolicy::IncludePartial, true};
  auto round1 = assign_stragglers(20, fixed, 5, 1, 321);
  auto round2 = assign_stragglers(20, fixed, 5, 2, 321);
  for (int k = 0; k < 20; ++k) CHECK((round1[k] == 5) == (round2[k] == 5));
}

TEST_CASE("select_participants by mode and policy") {
  Rng rng(17);
  std::vector<int> epochs = {3, 1, 3, 2, 3};
  auto full = select_participants(ParticipationMode::Full, 5, 5, {}, 0.0,
                                  StragglerPolicy::IncludePartial, epochs, 3, rng);
  CHECK(full == std::vector<int>{0, 1, 2, 3, 4});

  auto dropped = select_participants(ParticipationMode::Full, 5, 5, {}, 0.0,
                                     StragglerPolicy::Drop, epochs, 3, rng);
  CHECK(dropped == std::vector<int>{0, 2, 4});

  auto subset = select_participants(ParticipationMode::RandomSubset, 5, 3, {}, 0.0,
                                    StragglerPolicy::IncludePartial, epochs, 3, rng);
  CHECK(subset.size() == 3);
  CHECK(std::is_sorted(subset.begin(), subset.end()));

  std::vector<FadingDraw> draws = {{0.9, 0}, {0.1, 0}, {0.7, 0}, {0.5, 0}, {1.2, 0}};
  auto faded = select_participants(ParticipationMode::FadingThreshold, 5, 5, draws, 0.6,
                                   StragglerPolicy::IncludePartial, epochs, 3, rng);
  CHECK(faded == std::vector<int>{0, 2, 4});
  // Intersection with the straggler drop (COTAF under fading).
  auto both = select_participants(ParticipationMode::FadingThreshold, 5, 5, draws, 0.6,
                                  StragglerPolicy::Drop, epochs, 3, rng);
  CHECK(both == std::vector<int>{0, 2, 4});
  std::vector<FadingDraw> all_weak = {{0.1, 0}, {0.2, 0}, {0.3, 0}, {0.2, 0}, {0.1, 0}};
  auto none = select_participants(ParticipationMode::FadingThreshold, 5, 5, all_weak, 0.6,
                                  StragglerPolicy::IncludePartial, epochs, 3, rng);
  CHECK(none.empty());
}

TEST_CASE("one noiseless unit-precoded round equals an exact FedAvg step") {
  RunConfig cfg = small_config();
  cfg.lambda = 0.0;
  cfg.channel.precoding = PrecodingMode::Unit;
  cfg.max_epochs = 1;
  cfg.batch = 1000;  // full batch
  cfg.rounds = 1;
  RunConfig resolved = variant_config(cfg.variant, cfg);
  TrainState st = init_train_state(resolved);
  ParamVector theta0 = st.theta;

  ParamVector expected(theta0.size());
  for (int k = 0; k < resolved.clients; ++k) {
    ParamVector g = local_grad(theta0, st.shards[k], resolved.model);
    ParamVector step = theta0;
    add_scaled(step, -resolved.eta, g);
    add_scaled(expected, 1.0 / resolved.clients, step);
  }
  run_round(st, 1);
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(st.theta[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("hand-traced pipeline: solve, precode, superpose, decode") {
  RunConfig cfg = small_config();
  cfg.clients = 2;
  cfg.max_epochs = 1;
  cfg.batch = 1000;
  cfg.rounds = 1;
  cfg.lambda = 0.2;
  cfg.channel.precoding = PrecodingMode::Oracle;
  cfg.channel.power = 2.0;
  cfg.data.n = 80;
  RunConfig resolved = variant_config(cfg.variant, cfg);
  TrainState st = init_train_state(resolved);
  ParamVector theta0 = st.theta;

  // Reproduce the round by explicit stages.
  std::vector<ParamVector> locals(2);
  std::vector<double> norms(2), weights(2);
  ProxConfig prox{resolved.lambda, resolved.eta, resolved.max_epochs, resolved.batch};
  for (int k = 0; k < 2; ++k) {
    locals[k] = local_solve_sgd(st.shards[k], theta0, prox, 1, resolved.model,
                                derive_seed(resolved.master_seed, Stream::ClientSolve, 1, k));
    norms[k] = norm_sq(sub(locals[k], theta0));
    weights[k] = st.shards[k].weight;
  }
  const double p_t = resolved.channel.power / (weights[0] * norms[0] + weights[1] * norms[1]);
  std::vector<double> y(theta0.size(), 0.0);
  for (int k = 0; k < 2; ++k) {
    auto x = encode(locals[k], theta0, p_t);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
  }
  ParamVector expected(theta0.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    expected.values[i] = y[i] / (2.0 * std::sqrt(p_t)) + theta0[i];

  RoundRecord rec = run_round(st, 1);
  CHECK(rec.p_t == doctest::Approx(p_t).epsilon(1e-12));
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(st.theta[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("baseline equivalences are trajectory-exact under shared seeds") {
  // (a) NoROTA(sigma=0, unit p) == FedProx
  RunConfig manual = small_config();
  manual.channel.sigma2 = 0.0;
  manual.channel.precoding = PrecodingMode::Unit;
  RunConfig fedprox = small_config();
  fedprox.variant = ProtocolVariant::FedProx;
  fedprox.channel.sigma2 = 0.5;  // override must zero this
  CHECK(same_trajectory(trajectory(manual), trajectory(fedprox)));

  // (b) NoROTA(lambda=0, no stragglers) == COTAF
  RunConfig lam0 = small_config();
  lam0.lambda = 0.0;
  lam0.channel.sigma2 = 0.04;
  RunConfig cotaf = small_config();
  cotaf.variant = ProtocolVariant::Cotaf;
  cotaf.channel.sigma2 = 0.04;
  CHECK(same_trajectory(trajectory(lam0), trajectory(cotaf)));

  // (c) NoROTA(unit p) == NoisyProx
  RunConfig unit = small_config();
  unit.channel.sigma2 = 0.04;
  unit.channel.precoding = PrecodingMode::Unit;
  RunConfig noisyprox = small_config();
  noisyprox.variant = ProtocolVariant::NoisyProx;
  noisyprox.channel.sigma2 = 0.04;
  CHECK(same_trajectory(trajectory(unit), trajectory(noisyprox)));

  // (e) COTAF(unit p) == NoisyFedAvg
  RunConfig cotaf_unit = small_config();
  cotaf_unit.variant = ProtocolVariant::Cotaf;
  cotaf_unit.channel.sigma2 = 0.04;
  cotaf_unit.channel.precoding = PrecodingMode::Unit;
  RunConfig noisyfedavg = small_config();
  noisyfedavg.variant = ProtocolVariant::NoisyFedAvg;
  noisyfedavg.channel.sigma2 = 0.04;
  CHECK(same_trajectory(trajectory(cotaf_unit), trajectory(noisyfedavg)));
}

TEST_CASE("skipped rounds leave the model untouched") {
  RunConfig cfg = small_config();
  cfg.channel.fading = true;
  cfg.channel.r_hat = 50.0;  // nobody clears this
  cfg.rounds = 3;
  RunConfig resolved = variant_config(cfg.variant, cfg);
  TrainState st = init_train_state(resolved);
  ParamVector theta0 = st.theta;
  RoundRecord rec = run_round(st, 1);
  CHECK(rec.skipped);
  CHECK(rec.p_t == 0.0);
  CHECK(rec.participants.empty());
  CHECK(st.theta.values == theta0.values);
}

TEST_CASE("drop policy excludes partial workers; include keeps them") {
  RunConfig base = small_config();
  base.straggler.fraction = 0.5;
  base.rounds = 4;

  RunConfig include = base;
  include.straggler.policy = StragglerPolicy::IncludePartial;
  RunResult inc = run_training(include);
  bool saw_partial_participant = false;
  for (const auto& rec : inc.records)
    for (int k : rec.participants)
      if (rec.epochs_run[k] < include.max_epochs) saw_partial_participant = true;
  CHECK(saw_partial_participant);

  RunConfig drop = base;
  drop.straggler.policy = StragglerPolicy::Drop;
  RunResult dr = run_training(drop);
  for (const auto& rec : dr.records)
    for (int k : rec.participants) CHECK(rec.epochs_run[k] == drop.max_epochs);
}

TEST_CASE("random-subset participation uses K_hat clients") {
  RunConfig cfg = small_config();
  cfg.clients = 6;
  cfg.subset_size = 2;
  cfg.rounds = 5;
  RunResult result = run_training(cfg);
  std::set<std::vector<int>> distinct;
  for (const auto& rec : result.records) {
    CHECK(rec.participants.size() == 2);
    distinct.insert(rec.participants);
  }
  CHECK(distinct.size() > 1);  // resampled per round
}

TEST_CASE("run_training is deterministic and T=0 evaluates only") {
  RunConfig cfg = small_config();
  cfg.channel.sigma2 = 0.05;
  RunResult a = run_training(cfg);
  RunResult b = run_training(cfg);
  CHECK(a.theta.values == b.theta.values);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].global_loss == b.records[i].global_loss);
    CHECK(a.records[i].p_t == b.records[i].p_t);
    CHECK(a.records[i].test_accuracy == b.records[i].test_accuracy);
  }

  RunConfig none = small_config();
  none.rounds = 0;
  RunResult empty = run_training(none);
  CHECK(empty.records.empty());
  CHECK(empty.initial_loss > 0.0);
  CHECK(std::isfinite(empty.initial_accuracy));
}

TEST_CASE("divergence is flagged with the failing round") {
  RunConfig cfg = small_config();
  cfg.eta = 1e200;  // eta*lambda >> 1 overflows the anchored update
  cfg.data.separation = 6.0;
  cfg.rounds = 5;
  RunResult result = run_training(cfg);
  CHECK(result.diverged);
  CHECK(result.diverged_round >= 1);
  CHECK(static_cast<int>(result.records.size()) < 5);
}

TEST_CASE("delayed precoding uses gradient-step norms then previous updates") {
  RunConfig cfg = small_config();
  cfg.channel.precoding = PrecodingMode::Delayed;
  cfg.channel.power = 2.0;
  RunConfig resolved = variant_config(cfg.variant, cfg);
  TrainState st = init_train_state(resolved);

  // Round 1 denominator: sum_k q_k * ||eta * grad f_k(theta0)||^2.
  double denom = 0.0;
  for (int k = 0; k < resolved.clients; ++k) {
    double gn = norm(local_grad(st.theta, st.shards[k], resolved.model));
    denom += st.shards[k].weight * resolved.eta * resolved.eta * gn * gn;
  }
  ParamVector theta0 = st.theta;
  RoundRecord r1 = run_round(st, 1);
  CHECK(r1.p_t == doctest::Approx(resolved.channel.power / denom).epsilon(1e-12));

  // Round 2 denominator: round 1's actual update norms.
  ProxConfig prox{resolved.lambda, resolved.eta, resolved.max_epochs, resolved.batch};
  double denom2 = 0.0;
  for (int k = 0; k < resolved.clients; ++k) {
    ParamVector local =
        local_solve_sgd(st.shards[k], theta0, prox, r1.epochs_run[k], resolved.model,
                        derive_seed(resolved.master_seed, Stream::ClientSolve, 1, k));
    denom2 += st.shards[k].weight * norm_sq(sub(local, theta0));
  }
  RoundRecord r2 = run_round(st, 2);
  CHECK(r2.p_t == doctest::Approx(resolved.channel.power / denom2).epsilon(1e-12));
}

TEST_CASE("all-zero updates fall back to p_t = P") {
  // Identical features with opposite labels make theta = 0 exactly
  // stationary, so every local solve returns the anchor unchanged.
  Dataset sym;
  sym.n = 2;
  sym.m = 2;
  sym.num_classes = 2;
  sym.features = {0.4, -0.9, 0.4, -0.9};
  sym.labels = {0, 1};

  RunConfig cfg = small_config();
  cfg.clients = 2;
  cfg.rounds = 2;
  cfg.batch = 2;
  cfg.data.features = 2;  // match the handmade dataset
  cfg.channel.power = 3.5;
  RunConfig resolved = variant_config(cfg.variant, cfg);
  TrainState st = init_train_state(resolved);
  for (auto& shard : st.shards) {
    shard.data = sym;
    shard.weight = 0.5;
  }
  st.theta = ParamVector(st.theta.size());  // zeros
  st.global_grad = ParamVector(st.theta.size());
  st.client_grad_norm.assign(2, 0.0);

  RoundRecord rec = run_round(st, 1);
  CHECK(rec.p_t == 3.5);
  CHECK(st.theta.values == ParamVector(st.theta.size()).values);
  CHECK(std::isnan(rec.mean_gamma));
}

TEST_CASE("parallel client solves match the serial path bitwise") {
  RunConfig serial = small_config();
  serial.channel.sigma2 = 0.03;
  serial.straggler.fraction = 0.25;
  RunConfig parallel = serial;
  parallel.solve_threads = 3;
  RunResult a = run_training(serial);
  RunResult b = run_training(parallel);
  CHECK(a.theta.values == b.theta.values);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].p_t == b.records[i].p_t);
    CHECK(a.records[i].global_loss == b.records[i].global_loss);
    CHECK(a.records[i].mean_gamma == b.records[i].mean_gamma);
  }
}

TEST_CASE("per-round metrics are pure functions of (cfg, seed, t)") {
  RunConfig cfg = small_config();
  cfg.channel.sigma2 = 0.02;
  cfg.rounds = 4;
  RunResult full = run_training(cfg);

  cfg.rounds = 2;
  RunResult half = run_training(cfg);
  for (int t = 0; t < 2; ++t) {
    CHECK(half.records[t].global_loss == full.records[t].global_loss);
    CHECK(half.records[t].p_t == full.records[t].p_t);
  }
}

}  // TEST_SUITE
