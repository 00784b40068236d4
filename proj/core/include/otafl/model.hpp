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

#include <cstdint>
#include <string>
#include <vector>

#include "otafl/common.hpp"
#include "otafl/datagen.hpp"

namespace otafl {

/// Flat model parameter vector of fixed dimension d.
struct ParamVector {
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::size_t d, double fill = 0.0) : values(d, fill) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  bool finite() const;
};

double dot(const ParamVector& a, const ParamVector& b);
double norm_sq(const ParamVector& a);
double norm(const ParamVector& a);
/// y += alpha * x
void add_scaled(ParamVector& y, double alpha, const ParamVector& x);
ParamVector sub(const ParamVector& a, const ParamVector& b);

enum class ModelKind { MulticlassLogistic, Mlp };
enum class Activation { Tanh, Relu };

struct ModelSpec {
  ModelKind kind = ModelKind::MulticlassLogistic;
  int input_dim = 0;     // m
  int num_classes = 0;   // C
  std::vector<int> hidden;
  Activation activation = Activation::Tanh;

  /// Total parameter count d (weights + biases across layers).
  int param_count() const;
  /// Layer widths [m, hidden..., C].
  std::vector<int> layer_sizes() const;
};

/// Zeros for the logistic kind; seeded Xavier-uniform for the MLP (an
/// all-zero MLP never breaks hidden-unit symmetry).
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Mean cross-entropy over the listed rows (all rows when idx == nullptr).
/// When grad != nullptr it receives the mean gradient.
double model_loss_grad(const ParamVector& theta, const Dataset& ds,
                       const int* idx, int idx_count, const ModelSpec& spec,
                       ParamVector* grad);

/// Argmax class prediction; ties resolve to the lowest class id.
int predict_class(const ParamVector& theta, const double* row, const ModelSpec& spec);

double local_loss(const ParamVector& theta, const ClientShard& shard,
                  const ModelSpec& spec);
ParamVector local_grad(const ParamVector& theta, const ClientShard& shard,
                       const ModelSpec& spec);

/// h_k(theta; theta_ref) = f_k(theta) + (lambda/2) ||theta - theta_ref||^2
double prox_objective(const ParamVector& theta, const ParamVector& theta_ref,
                      double lambda, const ClientShard& shard, const ModelSpec& spec);
/// grad h_k = grad f_k + lambda (theta - theta_ref)
ParamVector prox_grad(const ParamVector& theta, const ParamVector& theta_ref,
                      double lambda, const ClientShard& shard, const ModelSpec& spec);

struct ProxConfig {
  double lambda = 0.0;  // >= 0
  double eta = 0.05;    // > 0
  int max_epochs = 1;   // E
  int batch = 64;

  void validate() const;
};

/// Mini-batch SGD on h_k(.; theta_init) for `epochs` <= cfg.max_epochs
/// epochs. Batch order is a per-epoch seeded shuffle keyed on
/// (seed, epoch), so a longer run extends a shorter run's trajectory.
/// Throws DivergedError with the epoch index if an iterate turns
/// non-finite.
ParamVector local_solve_sgd(const ClientShard& shard, const ParamVector& theta_init,
                            const ProxConfig& cfg, int epochs, const ModelSpec& spec,
                            std::uint64_t seed);

struct ProxSolveResult {
  ParamVector theta;
  double grad_norm = 0.0;
  int iterations = 0;
};

/// Full-batch gradient descent with Armijo backtracking on
/// h_k(.; theta_ref); the reference solver behind zeta measurements.
ProxSolveResult prox_minimize_gd(const ClientShard& shard, const ParamVector& theta_ref,
                                 const ParamVector& theta_init, double lambda,
                                 const ModelSpec& spec, int budget, double tol);

struct InexactnessReport {
  double gamma_hat = 0.0;
  double zeta_hat = 0.0;  // filled by measure_inexactness only
  double residual_grad_norm = 0.0;
  bool stationary_reference = false;  // ||grad f_k(theta_ref)|| below 1e-12
};

/// gamma_hat = ||grad h_k(theta_out; theta_ref)|| / ||grad f_k(theta_ref)||.
/// A stationary reference is flagged instead of divided by.
InexactnessReport measure_gamma(const ParamVector& theta_out, const ParamVector& theta_ref,
                                double lambda, const ClientShard& shard,
                                const ModelSpec& spec);

/// Both inexactness notions against one local problem; see measure_gamma
/// and measure_zeta.
InexactnessReport measure_inexactness(const ParamVector& theta_out,
                                      const ParamVector& theta_ref, double lambda,
                                      const ClientShard& shard, const ModelSpec& spec,
                                      int oracle_budget);

/// zeta_hat = h_k(theta_out) - min h_k, with min h_k taken from
/// prox_minimize_gd under `oracle_budget` iterations. Small negatives
/// (within 1e-8 oracle slack) clamp to zero; for the convex logistic kind a
/// residual oracle gradient above 1e-5 raises OracleError.
double measure_zeta(const ParamVector& theta_out, const ParamVector& theta_ref,
                    double lambda, const ClientShard& shard, const ModelSpec& spec,
                    int oracle_budget);

/// Checkpoint: flat little-endian binary of d doubles plus a JSON sidecar
/// {kind, m, C, hidden, d}.
void save_checkpoint(const std::string& bin_path, const std::string& json_path,
                     const ParamVector& theta, const ModelSpec& spec);
std::pair<ParamVector, ModelSpec> load_checkpoint(const std::string& bin_path,
                                                  const std::string& json_path);

}  // namespace otafl
