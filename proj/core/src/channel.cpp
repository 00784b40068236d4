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

#include "otafl/channel.hpp"

#include <cmath>
#include <limits>

namespace otafl {

void ChannelConfig::validate() const {
  if (power <= 0) throw ConfigError("channel.P", "transmit power must be > 0");
  if (sigma2 < 0) throw ConfigError("channel.sigma2", "noise variance must be >= 0");
  if (fading && r_hat <= 0)
    throw ConfigError("channel.r_hat", "fading requires a threshold > 0");
}

double compute_precoding_factor(const std::vector<double>& update_norms_sq,
                                const std::vector<double>& weights, double power) {
  if (update_norms_sq.size() != weights.size())
    throw std::invalid_argument("compute_precoding_factor: size mismatch");
  if (update_norms_sq.empty())
    throw std::invalid_argument("compute_precoding_factor: no clients");
  if (power <= 0) throw std::invalid_argument("compute_precoding_factor: power must be > 0");
  double denom = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k)
    denom += weights[k] * update_norms_sq[k];
  if (denom <= 0.0)
    throw DegenerateUpdateError("compute_precoding_factor: all updates are zero");
  return power / denom;
}

std::vector<double> encode(const ParamVector& theta_k, const ParamVector& theta_prev,
                           double p_t) {
  if (p_t <= 0) throw std::invalid_argument("encode: p_t must be > 0");
  if (theta_k.size() != theta_prev.size())
    throw std::invalid_argument("encode: dimension mismatch");
  const double scale = std::sqrt(p_t);
  std::vector<double> x(theta_k.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = scale * (theta_k[i] - theta_prev[i]);
    if (!std::isfinite(x[i])) throw std::runtime_error("encode: non-finite update");
  }
  return x;
}

std::optional<FadingSignal> encode_fading(const ParamVector& theta_k,
                                          const ParamVector& theta_prev, double p_t,
                                          const FadingDraw& draw, double r_hat) {
  if (p_t <= 0) throw std::invalid_argument("encode_fading: p_t must be > 0");
  if (draw.r <= r_hat) return std::nullopt;  // silent this round
  const double scale = r_hat * std::sqrt(p_t);
  FadingSignal sig;
  sig.contribution.resize(theta_k.size());
  double delta_sq = 0.0;
  for (std::size_t i = 0; i < sig.contribution.size(); ++i) {
    double diff = theta_k[i] - theta_prev[i];
    delta_sq += diff * diff;
    sig.contribution[i] = scale * diff;
  }
  sig.tx_power = (r_hat * r_hat * p_t / (draw.r * draw.r)) * delta_sq;
  return sig;
}

std::vector<double> mac_superpose(const std::vector<std::vector<double>>& inputs,
                                  double sigma2, Rng& rng) {
  if (inputs.empty()) throw std::invalid_argument("mac_superpose: no inputs");
  const std::size_t d = inputs.front().size();
  for (const auto& x : inputs)
    if (x.size() != d) throw std::invalid_argument("mac_superpose: length mismatch");
  std::vector<double> y(d, 0.0);
  for (const auto& x : inputs)
    for (std::size_t i = 0; i < d; ++i) y[i] += x[i];
  if (sigma2 > 0) {
    const double sd = std::sqrt(sigma2);
    for (auto& v : y) v += sd * rng.normal();
  }
  return y;
}

namespace {

ParamVector decode_scaled(const std::vector<double>& y, double divisor,
                          const ParamVector& theta_prev) {
  if (y.size() != theta_prev.size())
    throw std::invalid_argument("decode: dimension mismatch");
  ParamVector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    out.values[i] = y[i] / divisor + theta_prev[i];
  return out;
}

}  // namespace

ParamVector decode_full(const std::vector<double>& y, int clients, double p_t,
                        const ParamVector& theta_prev) {
  if (clients < 1) throw std::invalid_argument("decode_full: clients must be >= 1");
  if (p_t <= 0) throw std::invalid_argument("decode_full: p_t must be > 0");
  return decode_scaled(y, clients * std::sqrt(p_t), theta_prev);
}

ParamVector decode_partial(const std::vector<double>& y, int participating, double p_t,
                           const ParamVector& theta_prev) {
  if (participating < 1)
    throw std::invalid_argument("decode_partial: participating must be >= 1");
  if (p_t <= 0) throw std::invalid_argument("decode_partial: p_t must be > 0");
  return decode_scaled(y, participating * std::sqrt(p_t), theta_prev);
}

ParamVector decode_fading(const std::vector<double>& y, double r_hat, int participating,
                          double p_t, const ParamVector& theta_prev) {
  if (participating < 1)
    throw NoParticipantsError("decode_fading: no participating clients");
  if (r_hat <= 0) throw std::invalid_argument("decode_fading: r_hat must be > 0");
  if (p_t <= 0) throw std::invalid_argument("decode_fading: p_t must be > 0");
  return decode_scaled(y, r_hat * participating * std::sqrt(p_t), theta_prev);
}

std::vector<FadingDraw> draw_fading(int clients, Rng& rng) {
  if (clients < 1) throw std::invalid_argument("draw_fading: clients must be >= 1");
  std::vector<FadingDraw> draws(clients);
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (auto& d : draws) {
    // r^2 ~ Exp(1) gives E[r^2] = 1 and P(r > t) = exp(-t^2).
    d.r = std::sqrt(-std::log(1.0 - rng.uniform()));
    d.omega = two_pi * rng.uniform();
  }
  return draws;
}

double r_hat_for_expected_participants(int clients, double target) {
  if (clients < 1 || target <= 0 || target > clients)
    throw std::invalid_argument("r_hat_for_expected_participants: bad target");
  return std::sqrt(std::log(clients / target));
}

double snr_linear(double power, int dim, double sigma2) {
  if (power <= 0 || dim <= 0) throw std::invalid_argument("snr: bad power or dim");
  if (sigma2 < 0) throw std::invalid_argument("snr: sigma2 must be >= 0");
  if (sigma2 == 0) return std::numeric_limits<double>::infinity();
  return power / (dim * sigma2);
}

double snr_db(double power, int dim, double sigma2) {
  return 10.0 * std::log10(snr_linear(power, dim, sigma2));
}

double sigma2_for_snr_db(double power, int dim, double db) {
  if (power <= 0 || dim <= 0) throw std::invalid_argument("snr: bad power or dim");
  const double tau = std::pow(10.0, db / 10.0);
  return power / (dim * tau);
}

std::optional<std::vector<std::complex<double>>> encode_fading_complex(
    const ParamVector& theta_k, const ParamVector& theta_prev, double p_t,
    const FadingDraw& draw, double r_hat) {
  if (p_t <= 0) throw std::invalid_argument("encode_fading_complex: p_t must be > 0");
  if (draw.r <= r_hat) return std::nullopt;
  const std::complex<double> coef =
      (r_hat * std::sqrt(p_t) / draw.r) * std::exp(std::complex<double>(0.0, -draw.omega));
  std::vector<std::complex<double>> x(theta_k.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = coef * (theta_k[i] - theta_prev[i]);
  return x;
}

std::vector<std::complex<double>> apply_channel(const std::vector<std::complex<double>>& x,
                                                const FadingDraw& draw) {
  const std::complex<double> h =
      draw.r * std::exp(std::complex<double>(0.0, draw.omega));
  std::vector<std::complex<double>> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = h * x[i];
  return out;
}

ParamVector decode_fading_complex(const std::vector<std::complex<double>>& y,
                                  double r_hat, int participating, double p_t,
                                  const ParamVector& theta_prev) {
  if (participating < 1)
    throw NoParticipantsError("decode_fading_complex: no participating clients");
  const double divisor = r_hat * participating * std::sqrt(p_t);
  if (y.size() != theta_prev.size())
    throw std::invalid_argument("decode_fading_complex: dimension mismatch");
  ParamVector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    out.values[i] = y[i].real() / divisor + theta_prev[i];
  return out;
}

}  // namespace otafl
