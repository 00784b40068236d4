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

#include "otafl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace otafl {

double global_grad_norm_sq(const ParamVector& theta, const std::vector<ClientShard>& shards,
                           const ModelSpec& spec) {
  if (shards.empty()) throw std::invalid_argument("global_grad_norm_sq: no shards");
  ParamVector mean(theta.size());
  ParamVector g;
  for (const auto& shard : shards) {
    model_loss_grad(theta, shard.data, nullptr, 0, spec, &g);
    add_scaled(mean, 1.0 / shards.size(), g);
  }
  return norm_sq(mean);
}

LGDEstimate estimate_BH(const std::vector<LgdPoint>& trajectory) {
  if (trajectory.size() < 2)
    throw std::invalid_argument("estimate_BH: need at least 2 trajectory points");

  LGDEstimate est;
  est.n_points = static_cast<int>(trajectory.size());

  double x_min = trajectory.front().global_sq, x_max = x_min;
  double y_max = 0.0;
  for (const auto& p : trajectory) {
    x_min = std::min(x_min, p.global_sq);
    x_max = std::max(x_max, p.global_sq);
    y_max = std::max(y_max, p.local_sq);
  }

  auto h_needed = [&](double b) {
    double h = 0.0;
    for (const auto& p : trajectory) h = std::max(h, p.local_sq - b * p.global_sq);
    return h;
  };

  if (x_max - x_min <= 0.0) {
    est.B_hat = 0.0;
    est.H_hat = std::sqrt(y_max);
  } else {
    // b + h(b) is convex piecewise linear in b, so the optimum sits on a
    // corner: b = 0, a pairwise constraint intersection, or the point where
    // the envelope first reaches h = 0.
    std::vector<double> candidates{0.0};
    for (std::size_t i = 0; i < trajectory.size(); ++i)
      for (std::size_t j = i + 1; j < trajectory.size(); ++j) {
        double dx = trajectory[i].global_sq - trajectory[j].global_sq;
        if (dx == 0.0) continue;
        double b = (trajectory[i].local_sq - trajectory[j].local_sq) / dx;
        if (b > 0.0 && std::isfinite(b)) candidates.push_back(b);
      }
    for (const auto& p : trajectory)
      if (p.global_sq > 0.0) candidates.push_back(p.local_sq / p.global_sq);

    double best_obj = std::numeric_limits<double>::infinity();
    double best_b = 0.0, best_h = 0.0;
    for (double b : candidates) {
      double h = h_needed(b);
      double obj = b + h;
      if (obj < best_obj - 1e-15 ||
          (std::abs(obj - best_obj) <= 1e-15 &&
           (b < best_b || (b == best_b && h < best_h)))) {
        best_obj = obj;
        best_b = b;
        best_h = h;
      }
    }
    est.B_hat = std::sqrt(best_b);
    est.H_hat = std::sqrt(best_h);
  }

  est.max_violation = -std::numeric_limits<double>::infinity();
  const double b = est.B_hat * est.B_hat, h = est.H_hat * est.H_hat;
  for (const auto& p : trajectory)
    est.max_violation = std::max(est.max_violation, p.local_sq - (b * p.global_sq + h));
  return est;
}

BoundCheck check_precoding_bound(const std::vector<std::pair<double, double>>& rounds,
                                 double B_hat, double H_hat, double power) {
  BoundCheck out;
  int considered = 0, ok = 0;
  const double b = B_hat * B_hat, h = H_hat * H_hat;
  for (std::size_t t = 0; t < rounds.size(); ++t) {
    const auto& [p_t, grad_sq] = rounds[t];
    if (p_t <= 0) continue;  // skipped round
    ++considered;
    if (1.0 / p_t <= (b * grad_sq + h) / power + 1e-12) {
      ++ok;
    } else {
      out.violating_rounds.push_back(static_cast<int>(t));
    }
  }
  out.fraction = considered > 0 ? static_cast<double>(ok) / considered : 1.0;
  return out;
}

BoundCheck check_precoding_bound_zeroth(const std::vector<double>& p_ts, double G_hat,
                                        double power) {
  BoundCheck out;
  int considered = 0, ok = 0;
  for (std::size_t t = 0; t < p_ts.size(); ++t) {
    if (p_ts[t] <= 0) continue;
    ++considered;
    if (1.0 / p_ts[t] <= G_hat * G_hat / power + 1e-12) {
      ++ok;
    } else {
      out.violating_rounds.push_back(static_cast<int>(t));
    }
  }
  out.fraction = considered > 0 ? static_cast<double>(ok) / considered : 1.0;
  return out;
}

RateFit fit_rate(const std::vector<double>& values, int min_window) {
  RateFit fit;
  std::vector<double> lx, ly;
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (values[t] <= 0.0 || !std::isfinite(values[t])) {
      ++fit.filtered;
      continue;
    }
    lx.push_back(std::log(static_cast<double>(t + 1)));
    ly.push_back(std::log(values[t]));
  }
  fit.window = static_cast<int>(lx.size());
  if (fit.window < std::max(min_window, 2))
    throw std::invalid_argument("fit_rate: not enough usable points");

  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
    syy += ly[i] * ly[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("fit_rate: degenerate abscissa");
  fit.slope = (n * sxy - sx * sy) / denom;
  const double ss_tot = syy - sy * sy / n;
  const double intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    double r = ly[i] - (fit.slope * lx[i] + intercept);
    ss_res += r * r;
  }
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

std::vector<double> running_mean(const std::vector<double>& values) {
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    out[i] = acc / static_cast<double>(i + 1);
  }
  return out;
}

double evaluate_accuracy(const ParamVector& theta, const Dataset& test,
                         const ModelSpec& spec) {
  if (test.n <= 0) throw std::invalid_argument("evaluate_accuracy: empty test set");
  int hits = 0;
  for (int i = 0; i < test.n; ++i)
    if (predict_class(theta, test.row(i), spec) == test.labels[i]) ++hits;
  return static_cast<double>(hits) / test.n;
}

double logistic_smoothness_bound(const Dataset& ds) {
  double acc = 0.0;
  for (int i = 0; i < ds.n; ++i) {
    const double* row = ds.row(i);
    double s = 1.0;  // bias coordinate
    for (int j = 0; j < ds.m; ++j) s += row[j] * row[j];
    acc += s;
  }
  return 0.5 * acc / ds.n;
}

}  // namespace otafl
