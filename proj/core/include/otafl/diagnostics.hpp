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

#include <vector>

#include "otafl/datagen.hpp"
#include "otafl/model.hpp"

namespace otafl {

/// ||grad F(theta)||^2 with grad F the unweighted client mean.
double global_grad_norm_sq(const ParamVector& theta, const std::vector<ClientShard>& shards,
                           const ModelSpec& spec);

/// One trajectory sample for gradient-dissimilarity estimation, both values
/// taken at the same broadcast model.
struct LgdPoint {
  double local_sq = 0.0;   // weighted mean of ||grad f_k||^2
  double global_sq = 0.0;  // ||grad F||^2
};

struct LGDEstimate {
  double B_hat = 0.0;
  double H_hat = 0.0;
  int n_points = 0;
  double max_violation = 0.0;  // max over points of y - (B^2 x + H^2); <= 0 by construction
};

/// Fits the tightest upper envelope y <= B^2 x + H^2 over the trajectory:
/// the feasible pair minimizing B^2 + H^2, ties broken by smaller B^2 then
/// smaller H^2. Candidates are the envelope's corner points (pairwise
/// constraint intersections), so the result is exact. Degenerate inputs
/// (all x equal) return B = 0, H^2 = max y.
LGDEstimate estimate_BH(const std::vector<LgdPoint>& trajectory);

struct BoundCheck {
  double fraction = 1.0;
  std::vector<int> violating_rounds;
};

/// Fraction of rounds on which 1/p_t <= (B^2 ||grad F||^2 + H^2) / P, the
/// first-order precoding-factor bound. Pairs are (p_t, ||grad F||^2 at the
/// broadcast model); skipped rounds (p_t == 0) are ignored.
BoundCheck check_precoding_bound(const std::vector<std::pair<double, double>>& rounds,
                                 double B_hat, double H_hat, double power);

/// Zeroth-order variant: 1/p_t <= G^2 / P with G the largest observed local
/// gradient norm.
BoundCheck check_precoding_bound_zeroth(const std::vector<double>& p_ts, double G_hat,
                                        double power);

struct RateFit {
  double slope = 0.0;
  double r2 = 0.0;
  int window = 0;       // points actually fitted
  int filtered = 0;     // nonpositive values dropped before the log
};

/// Least-squares slope of log(values[t]) against log(t+1); min_window
/// guards against fitting noise on short traces. Feed raw series for exact
/// synthetic exponents or a running mean (below) for noisy traces.
RateFit fit_rate(const std::vector<double>& values, int min_window = 10);

/// Cumulative running mean, the averaging used by convergence-trend fits.
std::vector<double> running_mean(const std::vector<double>& values);

/// Argmax-prediction accuracy in [0, 1]; ties resolve to the lowest class.
double evaluate_accuracy(const ParamVector& theta, const Dataset& test,
                         const ModelSpec& spec);

/// Upper bound on the softmax cross-entropy smoothness constant of the
/// logistic kind over this data: 0.5 * mean ||(x, 1)||^2.
double logistic_smoothness_bound(const Dataset& ds);

}  // namespace otafl
