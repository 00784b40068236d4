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

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "otafl/common.hpp"
#include "otafl/model.hpp"

namespace otafl {

enum class PrecodingMode { Oracle, Delayed, Unit };

struct ChannelConfig {
  double power = 1.0;    // P
  double sigma2 = 0.0;   // AWGN variance at the server
  bool fading = false;
  double r_hat = 0.0;    // participation threshold, used iff fading
  PrecodingMode precoding = PrecodingMode::Oracle;

  void validate() const;
};

/// Block-fading coefficient r * e^{j omega} for one client, redrawn each
/// round.
struct FadingDraw {
  double r = 0.0;
  double omega = 0.0;
};

/// p_t = P / sum_k q_k * ||update_k||^2 over the transmitting set.
/// Throws DegenerateUpdateError when every norm is zero; callers fall back
/// to the previous round's factor (P on round one).
double compute_precoding_factor(const std::vector<double>& update_norms_sq,
                                const std::vector<double>& weights, double power);

/// x_k = sqrt(p_t) * (theta_k - theta_prev)
std::vector<double> encode(const ParamVector& theta_k, const ParamVector& theta_prev,
                           double p_t);

/// Channel-inverted transmission under fading, simulated in the
/// real-equivalent mode: participation requires r > r_hat (strict), the
/// effective received contribution is r_hat * sqrt(p_t) * delta (inversion
/// cancels the channel exactly) and the spent transmit power is
/// (r_hat^2 p_t / r^2) * ||delta||^2. Non-participants yield nullopt.
struct FadingSignal {
  std::vector<double> contribution;  // as seen after the channel
  double tx_power = 0.0;
};
std::optional<FadingSignal> encode_fading(const ParamVector& theta_k,
                                          const ParamVector& theta_prev, double p_t,
                                          const FadingDraw& draw, double r_hat);

/// y = sum_k x_k + w,  w ~ N(0, sigma2 I). sigma2 == 0 adds nothing.
std::vector<double> mac_superpose(const std::vector<std::vector<double>>& inputs,
                                  double sigma2, Rng& rng);

/// theta = y / (K sqrt(p_t)) + theta_prev
ParamVector decode_full(const std::vector<double>& y, int clients, double p_t,
                        const ParamVector& theta_prev);

/// theta = y / (K_hat sqrt(p_t)) + theta_prev
ParamVector decode_partial(const std::vector<double>& y, int participating, double p_t,
                           const ParamVector& theta_prev);

/// theta = y / (r_hat |K_t| sqrt(p_t)) + theta_prev; |K_t| == 0 raises
/// NoParticipantsError (the round is skipped upstream).
ParamVector decode_fading(const std::vector<double>& y, double r_hat, int participating,
                          double p_t, const ParamVector& theta_prev);

/// Unit-mean-square Rayleigh magnitudes (E[r^2] = 1, so P(r > t) = e^{-t^2})
/// and uniform phases, one draw per client.
std::vector<FadingDraw> draw_fading(int clients, Rng& rng);

/// Threshold giving an expected participant count of `target` out of K.
double r_hat_for_expected_participants(int clients, double target);

/// tau = P / (d sigma2); +inf when sigma2 == 0.
double snr_linear(double power, int dim, double sigma2);
double snr_db(double power, int dim, double sigma2);
/// sigma2 solving snr_db(P, d, sigma2) = db.
double sigma2_for_snr_db(double power, int dim, double db);

// --- complex-baseband cross-check -----------------------------------------
// The complex path carries the full fading arithmetic (explicit inversion,
// channel rotation, complex superposition) and must agree with the
// real-equivalent mode at sigma = 0. It exists for validation only.

std::optional<std::vector<std::complex<double>>> encode_fading_complex(
    const ParamVector& theta_k, const ParamVector& theta_prev, double p_t,
    const FadingDraw& draw, double r_hat);

std::vector<std::complex<double>> apply_channel(const std::vector<std::complex<double>>& x,
                                                const FadingDraw& draw);

ParamVector decode_fading_complex(const std::vector<std::complex<double>>& y,
                                  double r_hat, int participating, double p_t,
                                  const ParamVector& theta_prev);

}  // namespace otafl
