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

#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "otafl/channel.hpp"
#include "otafl/datagen.hpp"
#include "otafl/model.hpp"

namespace otafl {

enum class ProtocolVariant { NoRota, Cotaf, FedProx, NoisyProx, NoisyFedAvg, RobustComm };

std::string variant_name(ProtocolVariant v);
std::optional<ProtocolVariant> variant_from_name(const std::string& name);

enum class StragglerPolicy { IncludePartial, Drop };

struct StragglerModel {
  double fraction = 0.0;
  StragglerPolicy policy = StragglerPolicy::IncludePartial;
  bool fixed_set = false;  // freeze the straggler membership across rounds
};

struct DataConfig {
  enum class Source { Synthetic, Csv };
  Source source = Source::Synthetic;
  // synthetic
  int n = 3000;
  int features = 20;
  int classes = 3;
  double separation = 3.0;
  std::optional<std::uint64_t> seed;  // default: derived from master_seed
  // csv
  std::string csv_path;
  std::string label_column = "label";
  std::vector<std::string> feature_columns;
  bool normalize = false;

  double test_fraction = 0.2;
};

struct RunConfig {
  ProtocolVariant variant = ProtocolVariant::NoRota;
  int clients = 30;                // K
  std::optional<int> subset_size;  // K_hat; random-subset participation when set
  int max_epochs = 3;              // E
  int rounds = 200;                // T
  double lambda = 0.4;
  double eta = 0.05;
  int batch = 64;
  double pi = 0.5;
  StragglerModel straggler;
  ChannelConfig channel;
  std::optional<double> snr_db;  // resolves channel.sigma2 via tau = P/(d sigma2)
  ModelSpec model;
  DataConfig data;
  std::uint64_t master_seed = 1;
  int eval_every = 1;
  int zeta_every = 0;     // 0 disables the per-round zeta oracle
  int solve_threads = 1;  // client solves per round run on this many workers
};

/// Applies a baseline's defining overrides to a base configuration:
///   FedProx     -> sigma2 = 0, unit precoding
///   COTAF       -> lambda = 0, stragglers dropped
///   NoisyProx   -> unit precoding
///   NoisyFedAvg -> lambda = 0, unit precoding, stragglers dropped
///   RobustComm  -> lambda = sigma2
/// Also resolves snr_db into channel.sigma2 (which requires the model
/// dimension, auto-filled from synthetic data settings when unset).
RunConfig variant_config(ProtocolVariant v, const RunConfig& base);

/// Throws ConfigError naming the offending field.
void validate_run_config(const RunConfig& cfg);

struct RoundRecord {
  int t = 0;
  double global_loss = 0.0;    // F(theta_t), unweighted client mean
  double grad_norm_sq = 0.0;   // ||grad F(theta_t)||^2
  double test_accuracy = 0.0;
  double p_t = 0.0;            // 0 marks a skipped round
  std::vector<int> participants;
  std::vector<int> epochs_run;      // E_k for every client (0 = did not solve)
  std::vector<double> gamma_hat;    // per participant, NaN at stationary refs
  double mean_gamma = 0.0;
  double max_gamma = 0.0;
  double mean_zeta = std::numeric_limits<double>::quiet_NaN();
  double power_spent = 0.0;         // sum_k q_k ||x_k||^2 over transmitters
  double lgd_local_sq = 0.0;        // sum_k q_k ||grad f_k(ref)||^2 at broadcast point
  double lgd_global_sq = 0.0;       // ||grad F(ref)||^2 at broadcast point
  bool skipped = false;
  double wall_ms = 0.0;
  std::uint64_t noise_seed = 0;
};

struct RunResult {
  std::vector<RoundRecord> records;  // rounds 1..T
  ParamVector theta;
  double initial_loss = 0.0;
  double initial_grad_norm_sq = 0.0;
  double initial_accuracy = 0.0;
  bool diverged = false;
  int diverged_round = -1;
  std::vector<PartitionClientInfo> partition_info;
  std::vector<std::string> warnings;
  RunConfig resolved;
};

/// Fresh straggler set of size round(fraction*K) each round (or frozen when
/// fixed_set); stragglers run Uniform{1..E-1} epochs, everyone else E.
/// E == 1 leaves stragglers at one epoch and appends a warning.
std::vector<int> assign_stragglers(int clients, const StragglerModel& model, int max_epochs,
                                   int round, std::uint64_t master_seed,
                                   std::vector<std::string>* warnings = nullptr);

enum class ParticipationMode { Full, RandomSubset, FadingThreshold };

/// Participation rules, applied in order: the mode picks the transmitting
/// set (all / uniform K_hat-subset / fading r > r_hat), then a Drop policy
/// removes clients with partial work (E_k < E).
std::vector<int> select_participants(ParticipationMode mode, int clients, int subset_size,
                                     const std::vector<FadingDraw>& draws, double r_hat,
                                     StragglerPolicy policy,
                                     const std::vector<int>& epochs_run, int max_epochs,
                                     Rng& subset_rng);

/// Mutable state threaded through rounds. Gradient caches hold per-client
/// full-batch values at the current global model so each round pays one
/// evaluation pass.
struct TrainState {
  RunConfig cfg;  // resolved
  std::vector<ClientShard> shards;
  std::vector<PartitionClientInfo> partition_info;
  Dataset test;
  ParamVector theta;
  double global_loss = 0.0;
  ParamVector global_grad;
  std::vector<double> client_grad_norm;
  double prev_p = 0.0;
  std::vector<double> delayed_norms_sq;  // last known ||delta_k||^2 (delayed precoding)
  std::vector<std::string> warnings;
};

TrainState init_train_state(const RunConfig& resolved);

/// One communication round: broadcast, local proximal SGD with per-client
/// epoch budgets, precoding, analog superposition, decode, metrics.
RoundRecord run_round(TrainState& state, int t);

/// T rounds end to end; a diverging round truncates the result and flags it.
RunResult run_training(const RunConfig& cfg);

}  // namespace otafl
