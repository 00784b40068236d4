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

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace otafl {

inline constexpr const char* kVersion = "0.1.0";

/// Configuration error carrying the offending field name, so CLI
/// validation can print field-specific diagnostics.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& msg)
      : std::runtime_error(field + ": " + msg), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Raised when an iterate turns non-finite during a local solve.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(int epoch, const std::string& msg)
      : std::runtime_error(msg), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// All client updates are exactly zero: the precoding denominator vanishes.
class DegenerateUpdateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No client cleared the participation rules this round.
class NoParticipantsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The reference solve backing an inexactness measurement did not converge.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text-input parse failure with 1-based row (data rows, header excluded).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, long row, std::string column)
      : std::runtime_error(msg), row_(row), column_(std::move(column)) {}
  long row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  long row_;
  std::string column_;
};

// -------------------------------------------------------------------------
// Seeded randomness.
//
// Every random draw in the simulator comes from a stream derived from
// (master seed, purpose, round, client). Streams are stateless to derive,
// so skipping a consumer (e.g. zero stragglers) cannot shift any other
// stream, and runs are bitwise reproducible.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
  DataGen = 1,
  Split = 2,
  Partition = 3,
  Init = 4,
  ClientSolve = 5,
  Noise = 6,
  Straggler = 7,
  Fading = 8,
  Subset = 9,
  SweepCell = 10,
};

inline std::uint64_t derive_seed(std::uint64_t master, Stream s,
                                 std::uint64_t t = 0, std::uint64_t k = 0) {
  std::uint64_t h = splitmix64(master ^ 0x6f74616c66726e67ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(s));
  h = splitmix64(h ^ t);
  h = splitmix64(h ^ k);
  return h;
}

/// mt19937_64 wrapper with pinned output algorithms (uniform via 53-bit
/// mantissa, normal via Box-Muller, Fisher-Yates shuffle) so that results
/// do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal, Box-Muller with a cached second deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from {0, ..., n-1}, in random order.
  std::vector<int> sample_without_replacement(int n, int k);

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a over bytes; used for content-addressed run directories.
std::uint64_t fnv1a64(const std::string& bytes);

std::string to_hex(std::uint64_t v);

}  // namespace otafl
