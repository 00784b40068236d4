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

#include "otafl/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "otafl/diagnostics.hpp"

namespace otafl {

std::string variant_name(ProtocolVariant v) {
  switch (v) {
    case ProtocolVariant::NoRota: return "norota";
    case ProtocolVariant::Cotaf: return "cotaf";
    case ProtocolVariant::FedProx: return "fedprox";
    case ProtocolVariant::NoisyProx: return "noisyprox";
    case ProtocolVariant::NoisyFedAvg: return "noisyfedavg";
    case ProtocolVariant::RobustComm: return "robustcomm";
  }
  return "unknown";
}

std::optional<ProtocolVariant> variant_from_name(const std::string& name) {
  if (name == "norota") return ProtocolVariant::NoRota;
  if (name == "cotaf") return ProtocolVariant::Cotaf;
  if (name == "fedprox") return ProtocolVariant::FedProx;
  if (name == "noisyprox") return ProtocolVariant::NoisyProx;
  if (name == "noisyfedavg") return ProtocolVariant::NoisyFedAvg;
  if (name == "robustcomm") return ProtocolVariant::RobustComm;
  return std::nullopt;
}

RunConfig variant_config(ProtocolVariant v, const RunConfig& base) {
  RunConfig cfg = base;
  cfg.variant = v;

  // The model shape defaults to the synthetic data shape; CSV sources must
  // state model.m / model.C explicitly.
  if (cfg.data.source == DataConfig::Source::Synthetic) {
    if (cfg.model.input_dim == 0) cfg.model.input_dim = cfg.data.features;
    if (cfg.model.num_classes == 0) cfg.model.num_classes = cfg.data.classes;
  }

  if (cfg.snr_db.has_value()) {
    cfg.channel.sigma2 =
        sigma2_for_snr_db(cfg.channel.power, cfg.model.param_count(), *cfg.snr_db);
    cfg.snr_db.reset();
  }

  switch (v) {
    case ProtocolVariant::NoRota:
      break;
    case ProtocolVariant::FedProx:
      cfg.channel.sigma2 = 0.0;
      cfg.channel.precoding = PrecodingMode::Unit;
      break;
    case ProtocolVariant::Cotaf:
      cfg.lambda = 0.0;
      cfg.straggler.policy = StragglerPolicy::Drop;
      break;
    case ProtocolVariant::NoisyProx:
      cfg.channel.precoding = PrecodingMode::Unit;
      break;
    case ProtocolVariant::NoisyFedAvg:
      cfg.lambda = 0.0;
      cfg.channel.precoding = PrecodingMode::Unit;
      cfg.straggler.policy = StragglerPolicy::Drop;
      break;
    case ProtocolVariant::RobustComm:
      cfg.lambda = cfg.channel.sigma2;
      break;
  }
  return cfg;
}

void validate_run_config(const RunConfig& cfg) {
  if (cfg.clients < 1) throw ConfigError("K", "must be >= 1");
  if (cfg.subset_size.has_value()) {
    if (*cfg.subset_size < 1) throw ConfigError("K_hat", "must be >= 1");
    if (*cfg.subset_size > cfg.clients) throw ConfigError("K_hat", "must be <= K");
    if (cfg.channel.fading)
      throw ConfigError("K_hat", "random-subset and fading participation are exclusive");
  }
  if (cfg.max_epochs < 1) throw ConfigError("E", "must be >= 1");
  // T = 0 is tolerated: such a run evaluates the initial model and stops.
  if (cfg.rounds < 0) throw ConfigError("T", "must be >= 0");
  if (cfg.lambda < 0) throw ConfigError("lambda", "must be >= 0");
  if (cfg.eta <= 0) throw ConfigError("eta", "must be > 0");
  if (cfg.batch < 1) throw ConfigError("batch", "must be >= 1");
  if (cfg.pi < 0 || cfg.pi > 1) throw ConfigError("pi", "must lie in [0, 1]");
  if (cfg.straggler.fraction < 0 || cfg.straggler.fraction > 1)
    throw ConfigError("straggler.fraction", "must lie in [0, 1]");
  cfg.channel.validate();
  if (cfg.snr_db.has_value() && cfg.channel.sigma2 > 0)
    throw ConfigError("channel.snr_db", "set either snr_db or sigma2, not both");
  if (cfg.model.input_dim < 1)
    throw ConfigError("model.m", cfg.data.source == DataConfig::Source::Csv
                                     ? "required for csv data sources"
                                     : "must be >= 1");
  if (cfg.model.num_classes < 2)
    throw ConfigError("model.C", cfg.data.source == DataConfig::Source::Csv
                                     ? "required for csv data sources"
                                     : "must be >= 2");
  for (int h : cfg.model.hidden)
    if (h < 1) throw ConfigError("model.hidden", "layer widths must be >= 1");
  if (cfg.data.source == DataConfig::Source::Synthetic) {
    if (cfg.data.n < cfg.clients) throw ConfigError("data.n", "need at least K samples");
    if (cfg.data.classes < 2) throw ConfigError("data.classes", "must be >= 2");
    if (cfg.data.features < 1) throw ConfigError("data.features", "must be >= 1");
    if (cfg.data.separation < 0) throw ConfigError("data.separation", "must be >= 0");
  } else if (cfg.data.csv_path.empty()) {
    throw ConfigError("data.csv_path", "required for csv data source");
  }
  if (cfg.data.test_fraction < 0 || cfg.data.test_fraction >= 1)
    throw ConfigError("data.test_fraction", "must lie in [0, 1)");
  if (cfg.eval_every < 1) throw ConfigError("eval_every", "must be >= 1");
  if (cfg.zeta_every < 0) throw ConfigError("zeta_every", "must be >= 0");
  if (cfg.solve_threads < 1) throw ConfigError("solve_threads", "must be >= 1");
}

std::vector<int> assign_stragglers(int clients, const StragglerModel& model, int max_epochs,
                                   int round, std::uint64_t master_seed,
                                   std::vector<std::string>* warnings) {
  if (max_epochs < 1) throw std::invalid_argument("assign_stragglers: E must be >= 1");
  std::vector<int> epochs(clients, max_epochs);
  const int count = static_cast<int>(std::llround(model.fraction * clients));
  if (count == 0) return epochs;

  const std::uint64_t set_round = model.fixed_set ? 0 : static_cast<std::uint64_t>(round);
  Rng set_rng(derive_seed(master_seed, Stream::Straggler, set_round, 0));
  std::vector<int> stragglers = set_rng.sample_without_replacement(clients, count);

  if (max_epochs == 1) {
    if (warnings)
      warnings->push_back("stragglers requested with E = 1; partial work is impossible");
    return epochs;  // E_k = 1 for everyone already
  }
  Rng epoch_rng(derive_seed(master_seed, Stream::Straggler, static_cast<std::uint64_t>(round), 1));
  for (int k : stragglers)
    epochs[k] = 1 + static_cast<int>(epoch_rng.below(static_cast<std::uint64_t>(max_epochs - 1)));
  return epochs;
}

std::vector<int> select_participants(ParticipationMode mode, int clients, int subset_size,
                                     const std::vector<FadingDraw>& draws, double r_hat,
                                     StragglerPolicy policy,
                                     const std::vector<int>& epochs_run, int max_epochs,
                                     Rng& subset_rng) {
  std::vector<int> ids;
  switch (mode) {
    case ParticipationMode::Full:
      for (int k = 0; k < clients; ++k) ids.push_back(k);
      break;
    case ParticipationMode::RandomSubset:
      ids = subset_rng.sample_without_replacement(clients, subset_size);
      std::sort(ids.begin(), ids.end());
      break;
    case ParticipationMode::FadingThreshold:
      for (int k = 0; k < clients; ++k)
        if (draws[k].r > r_hat) ids.push_back(k);
      break;
  }
  if (policy == StragglerPolicy::Drop) {
    std::erase_if(ids, [&](int k) { return epochs_run[k] < max_epochs; });
  }
  return ids;
}

TrainState init_train_state(const RunConfig& resolved) {
  TrainState st;
  st.cfg = resolved;
  const auto& cfg = st.cfg;

  Dataset full;
  if (cfg.data.source == DataConfig::Source::Synthetic) {
    const std::uint64_t ds_seed =
        cfg.data.seed.value_or(derive_seed(cfg.master_seed, Stream::DataGen));
    full = gen_synthetic_classification(cfg.data.n, cfg.data.features, cfg.data.classes,
                                        cfg.data.separation, ds_seed);
  } else {
    CsvLoadOptions opts;
    opts.label_column = cfg.data.label_column;
    opts.feature_columns = cfg.data.feature_columns;
    opts.normalize = cfg.data.normalize;
    full = load_csv_dataset(cfg.data.csv_path, opts);
  }

  auto [train, test] = split_dataset(full, cfg.data.test_fraction, cfg.master_seed);
  st.test = std::move(test);

  PartitionSpec pspec;
  pspec.clients = cfg.clients;
  pspec.pi = cfg.pi;
  pspec.seed = cfg.master_seed;
  auto part = partition_heterogeneous(train, pspec);
  st.shards = std::move(part.shards);
  st.partition_info = std::move(part.clients);
  for (const auto& info : st.partition_info)
    if (info.home_substituted > 0)
      st.warnings.push_back("client " + std::to_string(info.client_id) + ": " +
                            std::to_string(info.home_substituted) +
                            " home-quota samples substituted from other classes");

  st.theta = init_params(cfg.model, cfg.master_seed);
  st.client_grad_norm.assign(cfg.clients, 0.0);
  st.delayed_norms_sq.assign(cfg.clients, 0.0);

  // Gradient caches at the initial model.
  st.global_grad = ParamVector(st.theta.size());
  double loss_sum = 0.0;
  ParamVector g;
  for (int k = 0; k < cfg.clients; ++k) {
    loss_sum += model_loss_grad(st.theta, st.shards[k].data, nullptr, 0, cfg.model, &g);
    st.client_grad_norm[k] = norm(g);
    add_scaled(st.global_grad, 1.0 / cfg.clients, g);
    st.delayed_norms_sq[k] = cfg.eta * cfg.eta * st.client_grad_norm[k] * st.client_grad_norm[k];
  }
  st.global_loss = loss_sum / cfg.clients;
  return st;
}

namespace {

void refresh_gradient_caches(TrainState& st) {
  const auto& cfg = st.cfg;
  st.global_grad = ParamVector(st.theta.size());
  double loss_sum = 0.0;
  ParamVector g;
  for (int k = 0; k < cfg.clients; ++k) {
    loss_sum += model_loss_grad(st.theta, st.shards[k].data, nullptr, 0, cfg.model, &g);
    st.client_grad_norm[k] = norm(g);
    add_scaled(st.global_grad, 1.0 / cfg.clients, g);
  }
  st.global_loss = loss_sum / cfg.clients;
}

}  // namespace

RoundRecord run_round(TrainState& st, int t) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cfg = st.cfg;
  const int K = cfg.clients;

  RoundRecord rec;
  rec.t = t;
  rec.lgd_global_sq = norm_sq(st.global_grad);
  {
    double acc = 0.0;
    for (int k = 0; k < K; ++k)
      acc += st.shards[k].weight * st.client_grad_norm[k] * st.client_grad_norm[k];
    rec.lgd_local_sq = acc;
  }

  rec.epochs_run = assign_stragglers(K, cfg.straggler, cfg.max_epochs, t, cfg.master_seed,
                                     t == 1 ? &st.warnings : nullptr);

  std::vector<FadingDraw> draws;
  ParticipationMode mode = ParticipationMode::Full;
  if (cfg.channel.fading) {
    mode = ParticipationMode::FadingThreshold;
    Rng fading_rng(derive_seed(cfg.master_seed, Stream::Fading, t));
    draws = draw_fading(K, fading_rng);
  } else if (cfg.subset_size.has_value()) {
    mode = ParticipationMode::RandomSubset;
  }

  Rng subset_rng(derive_seed(cfg.master_seed, Stream::Subset, t));
  rec.participants =
      select_participants(mode, K, cfg.subset_size.value_or(K), draws, cfg.channel.r_hat,
                          cfg.straggler.policy, rec.epochs_run, cfg.max_epochs, subset_rng);
  for (int k = 0; k < K; ++k) {
    const bool participates =
        std::binary_search(rec.participants.begin(), rec.participants.end(), k);
    if (!participates) rec.epochs_run[k] = 0;
  }

  if (rec.participants.empty()) {
    rec.skipped = true;
    rec.p_t = 0.0;
    rec.global_loss = st.global_loss;
    rec.grad_norm_sq = norm_sq(st.global_grad);
    rec.test_accuracy = st.test.n > 0 ? evaluate_accuracy(st.theta, st.test, cfg.model)
                                      : std::numeric_limits<double>::quiet_NaN();
    rec.mean_gamma = std::numeric_limits<double>::quiet_NaN();
    rec.max_gamma = std::numeric_limits<double>::quiet_NaN();
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0).count();
    return rec;
  }

  // Local proximal solves.
  ProxConfig prox;
  prox.lambda = cfg.lambda;
  prox.eta = cfg.eta;
  prox.max_epochs = cfg.max_epochs;
  prox.batch = cfg.batch;

  const int n_tx = static_cast<int>(rec.participants.size());
  std::vector<ParamVector> locals(n_tx);
  std::vector<double> norms_sq(n_tx), weights(n_tx);
  rec.gamma_hat.resize(n_tx);

  // Client solves are independent; with solve_threads > 1 they run on a
  // worker pool and join in participant order, so results are identical to
  // the serial path.
  auto solve_one = [&](int i) {
    const int k = rec.participants[i];
    try {
      locals[i] = local_solve_sgd(st.shards[k], st.theta, prox, rec.epochs_run[k], cfg.model,
                                  derive_seed(cfg.master_seed, Stream::ClientSolve, t, k));
    } catch (const DivergedError& e) {
      throw DivergedError(e.epoch(), "round " + std::to_string(t) + ", client " +
                                         std::to_string(k) + ": " + e.what());
    }
    ParamVector delta = sub(locals[i], st.theta);
    norms_sq[i] = norm_sq(delta);
    weights[i] = st.shards[k].weight;
    const double resid =
        norm(prox_grad(locals[i], st.theta, cfg.lambda, st.shards[k], cfg.model));
    rec.gamma_hat[i] = st.client_grad_norm[k] < 1e-12
                           ? std::numeric_limits<double>::quiet_NaN()
                           : resid / st.client_grad_norm[k];
  };

  const int workers = std::max(1, std::min(cfg.solve_threads, n_tx));
  if (workers == 1) {
    for (int i = 0; i < n_tx; ++i) solve_one(i);
  } else {
    std::vector<std::exception_ptr> errors(n_tx);
    std::atomic<int> next{0};
    auto drain = [&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n_tx) return;
        try {
          solve_one(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(drain);
    for (auto& th : pool) th.join();
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);  // lowest participant index first
  }

  double gamma_sum = 0.0, gamma_max = 0.0;
  int gamma_count = 0;
  for (int i = 0; i < n_tx; ++i) {
    if (!std::isnan(rec.gamma_hat[i])) {
      gamma_sum += rec.gamma_hat[i];
      gamma_max = std::max(gamma_max, rec.gamma_hat[i]);
      ++gamma_count;
    }
  }
  rec.mean_gamma = gamma_count > 0 ? gamma_sum / gamma_count
                                   : std::numeric_limits<double>::quiet_NaN();
  rec.max_gamma = gamma_count > 0 ? gamma_max : std::numeric_limits<double>::quiet_NaN();

  // Precoding factor.
  double p_t = 1.0;
  switch (cfg.channel.precoding) {
    case PrecodingMode::Unit:
      p_t = 1.0;
      break;
    case PrecodingMode::Oracle:
      try {
        p_t = compute_precoding_factor(norms_sq, weights, cfg.channel.power);
      } catch (const DegenerateUpdateError&) {
        p_t = st.prev_p > 0 ? st.prev_p : cfg.channel.power;
      }
      break;
    case PrecodingMode::Delayed: {
      double denom = 0.0;
      for (int i = 0; i < n_tx; ++i)
        denom += weights[i] * st.delayed_norms_sq[rec.participants[i]];
      if (denom > 0) {
        p_t = cfg.channel.power / denom;
      } else {
        p_t = st.prev_p > 0 ? st.prev_p : cfg.channel.power;
      }
      for (int i = 0; i < n_tx; ++i)
        st.delayed_norms_sq[rec.participants[i]] = norms_sq[i];
      break;
    }
  }
  rec.p_t = p_t;
  st.prev_p = p_t;

  // Encode, superpose, decode.
  std::vector<std::vector<double>> signals(n_tx);
  for (int i = 0; i < n_tx; ++i) {
    const int k = rec.participants[i];
    if (cfg.channel.fading) {
      auto sig = encode_fading(locals[i], st.theta, p_t, draws[k], cfg.channel.r_hat);
      // select_participants already enforced r > r_hat
      signals[i] = std::move(sig->contribution);
      rec.power_spent += st.shards[k].weight * sig->tx_power;
    } else {
      signals[i] = encode(locals[i], st.theta, p_t);
      rec.power_spent += st.shards[k].weight * p_t * norms_sq[i];
    }
  }

  rec.noise_seed = derive_seed(cfg.master_seed, Stream::Noise, t);
  Rng noise_rng(rec.noise_seed);
  std::vector<double> y = mac_superpose(signals, cfg.channel.sigma2, noise_rng);

  ParamVector next = cfg.channel.fading
                         ? decode_fading(y, cfg.channel.r_hat, n_tx, p_t, st.theta)
                         : decode_partial(y, n_tx, p_t, st.theta);

  // Optional zeta oracle, measured against the broadcast model.
  if (cfg.zeta_every > 0 && t % cfg.zeta_every == 0) {
    double zeta_sum = 0.0;
    for (int i = 0; i < n_tx; ++i)
      zeta_sum += measure_zeta(locals[i], st.theta, cfg.lambda,
                               st.shards[rec.participants[i]], cfg.model, 2000);
    rec.mean_zeta = zeta_sum / n_tx;
  }

  st.theta = std::move(next);
  if (!st.theta.finite())
    throw DivergedError(-1, "round " + std::to_string(t) + ": decoded model is non-finite");
  refresh_gradient_caches(st);

  rec.global_loss = st.global_loss;
  rec.grad_norm_sq = norm_sq(st.global_grad);
  rec.test_accuracy = (st.test.n > 0 && t % cfg.eval_every == 0)
                          ? evaluate_accuracy(st.theta, st.test, cfg.model)
                          : std::numeric_limits<double>::quiet_NaN();
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0).count();
  return rec;
}

RunResult run_training(const RunConfig& cfg) {
  RunConfig resolved = variant_config(cfg.variant, cfg);
  validate_run_config(resolved);

  TrainState st = init_train_state(resolved);
  RunResult result;
  result.resolved = resolved;
  result.partition_info = st.partition_info;
  result.initial_loss = st.global_loss;
  result.initial_grad_norm_sq = norm_sq(st.global_grad);
  result.initial_accuracy = st.test.n > 0
                                ? evaluate_accuracy(st.theta, st.test, resolved.model)
                                : std::numeric_limits<double>::quiet_NaN();

  for (int t = 1; t <= resolved.rounds; ++t) {
    try {
      result.records.push_back(run_round(st, t));
    } catch (const DivergedError& e) {
      result.diverged = true;
      result.diverged_round = t;
      st.warnings.push_back(std::string("diverged: ") + e.what());
      break;
    }
  }
  result.theta = std::move(st.theta);
  result.warnings = std::move(st.warnings);
  return result;
}

}  // namespace otafl
