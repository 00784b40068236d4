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

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "otafl/config.hpp"
#include "otafl/diagnostics.hpp"
#include "otafl/protocol.hpp"

namespace otafl {

/// Stable per-round CSV, one row per round:
/// t,loss,grad_norm_sq,accuracy,p_t,n_participants,mean_E_k,mean_gamma_hat
std::string run_records_csv(const RunResult& result);

/// Content hash of the resolved config; names the run directory.
std::string run_config_hash(const RunConfig& resolved);

struct RunArtifacts {
  std::string dir;
  RunResult result;
};

/// Executes one run and writes rounds.csv, manifest.json, partition.json,
/// diagnostics.json and the final model checkpoint under
/// out_root/run-<hash>/ (or exactly out_root when exact_dir).
RunArtifacts execute_run(const RunConfig& cfg, const std::string& out_root,
                         bool exact_dir = false,
                         const std::optional<std::string>& cell_label = std::nullopt,
                         std::optional<int> repeat = std::nullopt,
                         std::optional<double> axis_value = std::nullopt);

struct SweepRowSummary {
  std::string axis;
  double value = 0.0;
  int repeat = 0;
  std::string variant;
  std::uint64_t seed = 0;
  int rounds = 0;
  double final_loss = 0.0;
  double final_grad_norm_sq = 0.0;
  double final_accuracy = 0.0;
  double window_accuracy = 0.0;  // mean over the last min(50, T) evaluated rounds
  double window_loss = 0.0;
  bool diverged = false;
};

/// Runs every (value, repeat, variant) cell in a bounded worker pool and
/// writes sweep_summary.csv plus per-cell run directories. Aggregation
/// order is deterministic regardless of jobs.
std::vector<SweepRowSummary> run_sweep(const SweepSpec& spec, const std::string& out_root,
                                       int jobs, std::ostream& log);

std::string sweep_summary_csv(const std::vector<SweepRowSummary>& rows);

/// Channel-law Monte-Carlo verification. Prints measured vs theoretical
/// decoded-noise variance for the three decode rules, the Rayleigh
/// participation rate, and the power-constraint residual. Returns true when
/// every check is inside tolerance (5% on variances, 3% on participation,
/// 1e-9 on power).
struct ChannelVerifyConfig {
  long trials = 100000;
  double power = 1.0;
  double sigma2 = 1.0;
  int full_clients = 3;
  double full_p = 0.25;
  int partial_clients = 4;
  int partial_subset = 2;
  int fading_participants = 5;
  double fading_r_hat = 0.8;
  double fading_p = 0.5;
  std::uint64_t seed = 2024;
};
bool verify_channel(const ChannelVerifyConfig& cfg, std::ostream& out);

/// Merges per-round metric series from several run directories into a
/// long-format CSV: variant,round,repeat,value. Series longer than the
/// shortest run are truncated with a warning on `log`.
std::string emit_plot_data(const std::vector<std::string>& run_dirs,
                           const std::string& metric, std::ostream& log);

}  // namespace otafl
