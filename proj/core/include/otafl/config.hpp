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

#include <map>
#include <string>
#include <vector>

#include "otafl/protocol.hpp"

namespace otafl {

/// Flat key-value config text: one `key = value` per line, '#' comments,
/// dotted sections (channel.P, straggler.fraction). Lists are
/// comma-separated. Unknown keys are rejected after loading.
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback);
  std::string require_string(const std::string& key);
  double get_double(const std::string& key, double fallback);
  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<double> get_double_list(const std::string& key);
  std::vector<int> get_int_list(const std::string& key);
  std::vector<std::string> get_string_list(const std::string& key);

  /// Throws ConfigError on the first key never consumed by a getter.
  void reject_unused() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, bool> used_;
};

/// Builds a RunConfig from run.* keys; throws ConfigError with the field
/// name on any malformed or out-of-range value.
RunConfig run_config_from_map(ConfigMap& map);

/// Canonical flat serialization of a resolved config; the byte source for
/// the run content hash.
std::string serialize_run_config(const RunConfig& cfg);

struct SweepSpec {
  enum class Axis { SnrDb, Pi, StragglerFraction, Lambda, RHat };
  RunConfig base;
  Axis axis = Axis::SnrDb;
  std::vector<double> values;
  int repeats = 1;
  std::vector<ProtocolVariant> variants;  // empty = just base.variant
};

std::string axis_name(SweepSpec::Axis a);
SweepSpec sweep_from_map(ConfigMap& map);

/// Applies one sweep coordinate to a copy of the base config, with a
/// cell-unique master seed so no two cells share RNG streams.
RunConfig apply_sweep_cell(const SweepSpec& spec, int value_index, int repeat,
                           ProtocolVariant variant);

}  // namespace otafl
