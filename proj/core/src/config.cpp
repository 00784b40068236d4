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

#include "otafl/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace otafl {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : raw) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  std::string last = trim(cur);
  if (!last.empty() || !out.empty()) out.push_back(last);
  return out;
}

double parse_double(const std::string& key, const std::string& raw) {
  char* end = nullptr;
  double v = std::strtod(raw.c_str(), &end);
  if (raw.empty() || end == nullptr || *end != '\0' || !std::isfinite(v))
    throw ConfigError(key, "'" + raw + "' is not a finite real");
  return v;
}

long long parse_int(const std::string& key, const std::string& raw) {
  char* end = nullptr;
  long long v = std::strtoll(raw.c_str(), &end, 10);
  if (raw.empty() || end == nullptr || *end != '\0')
    throw ConfigError(key, "'" + raw + "' is not an integer");
  return v;
}

}  // namespace

ConfigMap ConfigMap::parse_string(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    if (map.entries_.count(key))
      throw ConfigError(key, "duplicate key");
    map.entries_[key] = value;
    map.used_[key] = false;
  }
  return map;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

bool ConfigMap::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  used_[key] = true;
  return it->second;
}

std::string ConfigMap::require_string(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(key, "required key is missing");
  used_[key] = true;
  return it->second;
}

double ConfigMap::get_double(const std::string& key, double fallback) {
  if (!has(key)) return fallback;
  return parse_double(key, get_string(key, ""));
}

int ConfigMap::get_int(const std::string& key, int fallback) {
  if (!has(key)) return fallback;
  long long v = parse_int(key, get_string(key, ""));
  return static_cast<int>(v);
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) {
  if (!has(key)) return fallback;
  const std::string raw = get_string(key, "");
  char* end = nullptr;
  unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
  if (raw.empty() || end == nullptr || *end != '\0')
    throw ConfigError(key, "'" + raw + "' is not an unsigned integer");
  return v;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  std::string raw = get_string(key, "");
  if (raw == "true" || raw == "1" || raw == "yes") return true;
  if (raw == "false" || raw == "0" || raw == "no") return false;
  throw ConfigError(key, "'" + raw + "' is not a boolean");
}

std::vector<double> ConfigMap::get_double_list(const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(require_string(key)))
    out.push_back(parse_double(key, item));
  return out;
}

std::vector<int> ConfigMap::get_int_list(const std::string& key) {
  std::vector<int> out;
  for (const auto& item : split_list(require_string(key)))
    out.push_back(static_cast<int>(parse_int(key, item)));
  return out;
}

std::vector<std::string> ConfigMap::get_string_list(const std::string& key) {
  return split_list(require_string(key));
}

void ConfigMap::reject_unused() const {
  for (const auto& [key, used] : used_)
    if (!used) throw ConfigError(key, "unknown configuration key");
}

RunConfig run_config_from_map(ConfigMap& map) {
  RunConfig cfg;

  const std::string vname = map.get_string("variant", "norota");
  auto v = variant_from_name(vname);
  if (!v) throw ConfigError("variant", "'" + vname + "' is not a known variant");
  cfg.variant = *v;

  cfg.clients = map.get_int("K", cfg.clients);
  if (map.has("K_hat")) cfg.subset_size = map.get_int("K_hat", 0);
  cfg.max_epochs = map.get_int("E", cfg.max_epochs);
  cfg.rounds = map.get_int("T", cfg.rounds);
  cfg.lambda = map.get_double("lambda", cfg.lambda);
  cfg.eta = map.get_double("eta", cfg.eta);
  cfg.batch = map.get_int("batch", cfg.batch);
  cfg.pi = map.get_double("pi", cfg.pi);
  cfg.master_seed = map.get_u64("master_seed", cfg.master_seed);
  cfg.eval_every = map.get_int("eval_every", cfg.eval_every);
  cfg.zeta_every = map.get_int("zeta_every", cfg.zeta_every);
  // Execution knob: changes wall time, never results, so it stays out of
  // the canonical serialization and the run hash.
  cfg.solve_threads = map.get_int("solve_threads", cfg.solve_threads);

  cfg.straggler.fraction = map.get_double("straggler.fraction", 0.0);
  const std::string policy = map.get_string("straggler.policy", "include-partial");
  if (policy == "include-partial") {
    cfg.straggler.policy = StragglerPolicy::IncludePartial;
  } else if (policy == "drop") {
    cfg.straggler.policy = StragglerPolicy::Drop;
  } else {
    throw ConfigError("straggler.policy", "'" + policy + "' is not include-partial|drop");
  }
  cfg.straggler.fixed_set = map.get_bool("straggler.fixed", false);

  cfg.channel.power = map.get_double("channel.P", 1.0);
  cfg.channel.sigma2 = map.get_double("channel.sigma2", 0.0);
  if (map.has("channel.snr_db")) cfg.snr_db = map.get_double("channel.snr_db", 0.0);
  if (map.has("channel.snr_db") && map.has("channel.sigma2"))
    throw ConfigError("channel.snr_db", "set either snr_db or sigma2, not both");
  cfg.channel.fading = map.get_bool("channel.fading", false);
  cfg.channel.r_hat = map.get_double("channel.r_hat", 0.0);
  const std::string precoding = map.get_string("channel.precoding", "oracle");
  if (precoding == "oracle") {
    cfg.channel.precoding = PrecodingMode::Oracle;
  } else if (precoding == "delayed") {
    cfg.channel.precoding = PrecodingMode::Delayed;
  } else if (precoding == "unit") {
    cfg.channel.precoding = PrecodingMode::Unit;
  } else {
    throw ConfigError("channel.precoding", "'" + precoding + "' is not oracle|delayed|unit");
  }

  const std::string kind = map.get_string("model.kind", "multiclass-logistic");
  if (kind == "multiclass-logistic") {
    cfg.model.kind = ModelKind::MulticlassLogistic;
  } else if (kind == "mlp") {
    cfg.model.kind = ModelKind::Mlp;
  } else {
    throw ConfigError("model.kind", "'" + kind + "' is not multiclass-logistic|mlp");
  }
  cfg.model.input_dim = map.get_int("model.m", 0);
  cfg.model.num_classes = map.get_int("model.C", 0);
  if (map.has("model.hidden")) cfg.model.hidden = map.get_int_list("model.hidden");
  const std::string act = map.get_string("model.activation", "tanh");
  if (act == "tanh") {
    cfg.model.activation = Activation::Tanh;
  } else if (act == "relu") {
    cfg.model.activation = Activation::Relu;
  } else {
    throw ConfigError("model.activation", "'" + act + "' is not tanh|relu");
  }

  const std::string source = map.get_string("data.source", "synthetic");
  if (source == "synthetic") {
    cfg.data.source = DataConfig::Source::Synthetic;
  } else if (source == "csv") {
    cfg.data.source = DataConfig::Source::Csv;
  } else {
    throw ConfigError("data.source", "'" + source + "' is not synthetic|csv");
  }
  cfg.data.n = map.get_int("data.n", cfg.data.n);
  cfg.data.features = map.get_int("data.features", cfg.data.features);
  cfg.data.classes = map.get_int("data.classes", cfg.data.classes);
  cfg.data.separation = map.get_double("data.separation", cfg.data.separation);
  if (map.has("data.seed")) cfg.data.seed = map.get_u64("data.seed", 0);
  cfg.data.csv_path = map.get_string("data.csv_path", "");
  cfg.data.label_column = map.get_string("data.label_column", cfg.data.label_column);
  if (map.has("data.feature_columns"))
    cfg.data.feature_columns = map.get_string_list("data.feature_columns");
  cfg.data.normalize = map.get_bool("data.normalize", false);
  cfg.data.test_fraction = map.get_double("data.test_fraction", cfg.data.test_fraction);

  return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };

  os << "variant = " << variant_name(cfg.variant) << "\n";
  os << "K = " << cfg.clients << "\n";
  if (cfg.subset_size) os << "K_hat = " << *cfg.subset_size << "\n";
  os << "E = " << cfg.max_epochs << "\n";
  os << "T = " << cfg.rounds << "\n";
  os << "lambda = " << num(cfg.lambda) << "\n";
  os << "eta = " << num(cfg.eta) << "\n";
  os << "batch = " << cfg.batch << "\n";
  os << "pi = " << num(cfg.pi) << "\n";
  os << "master_seed = " << cfg.master_seed << "\n";
  os << "eval_every = " << cfg.eval_every << "\n";
  os << "zeta_every = " << cfg.zeta_every << "\n";
  os << "straggler.fraction = " << num(cfg.straggler.fraction) << "\n";
  os << "straggler.policy = "
     << (cfg.straggler.policy == StragglerPolicy::Drop ? "drop" : "include-partial") << "\n";
  os << "straggler.fixed = " << (cfg.straggler.fixed_set ? "true" : "false") << "\n";
  os << "channel.P = " << num(cfg.channel.power) << "\n";
  os << "channel.sigma2 = " << num(cfg.channel.sigma2) << "\n";
  if (cfg.snr_db) os << "channel.snr_db = " << num(*cfg.snr_db) << "\n";
  os << "channel.fading = " << (cfg.channel.fading ? "true" : "false") << "\n";
  os << "channel.r_hat = " << num(cfg.channel.r_hat) << "\n";
  os << "channel.precoding = ";
  switch (cfg.channel.precoding) {
    case PrecodingMode::Oracle: os << "oracle"; break;
    case PrecodingMode::Delayed: os << "delayed"; break;
    case PrecodingMode::Unit: os << "unit"; break;
  }
  os << "\n";
  os << "model.kind = "
     << (cfg.model.kind == ModelKind::Mlp ? "mlp" : "multiclass-logistic") << "\n";
  os << "model.m = " << cfg.model.input_dim << "\n";
  os << "model.C = " << cfg.model.num_classes << "\n";
  if (!cfg.model.hidden.empty()) {
    os << "model.hidden = ";
    for (std::size_t i = 0; i < cfg.model.hidden.size(); ++i)
      os << (i ? "," : "") << cfg.model.hidden[i];
    os << "\n";
  }
  os << "model.activation = "
     << (cfg.model.activation == Activation::Relu ? "relu" : "tanh") << "\n";
  os << "data.source = "
     << (cfg.data.source == DataConfig::Source::Csv ? "csv" : "synthetic") << "\n";
  if (cfg.data.source == DataConfig::Source::Synthetic) {
    os << "data.n = " << cfg.data.n << "\n";
    os << "data.features = " << cfg.data.features << "\n";
    os << "data.classes = " << cfg.data.classes << "\n";
    os << "data.separation = " << num(cfg.data.separation) << "\n";
  } else {
    os << "data.csv_path = " << cfg.data.csv_path << "\n";
    os << "data.label_column = " << cfg.data.label_column << "\n";
    if (!cfg.data.feature_columns.empty()) {
      os << "data.feature_columns = ";
      for (std::size_t i = 0; i < cfg.data.feature_columns.size(); ++i)
        os << (i ? "," : "") << cfg.data.feature_columns[i];
      os << "\n";
    }
    os << "data.normalize = " << (cfg.data.normalize ? "true" : "false") << "\n";
  }
  if (cfg.data.seed) os << "data.seed = " << *cfg.data.seed << "\n";
  os << "data.test_fraction = " << num(cfg.data.test_fraction) << "\n";
  return os.str();
}

std::string axis_name(SweepSpec::Axis a) {
  switch (a) {
    case SweepSpec::Axis::SnrDb: return "snr_db";
    case SweepSpec::Axis::Pi: return "pi";
    case SweepSpec::Axis::StragglerFraction: return "straggler_fraction";
    case SweepSpec::Axis::Lambda: return "lambda";
    case SweepSpec::Axis::RHat: return "r_hat";
  }
  return "unknown";
}

SweepSpec sweep_from_map(ConfigMap& map) {
  SweepSpec spec;
  const std::string axis = map.require_string("sweep.axis");
  if (axis == "snr_db") {
    spec.axis = SweepSpec::Axis::SnrDb;
  } else if (axis == "pi") {
    spec.axis = SweepSpec::Axis::Pi;
  } else if (axis == "straggler_fraction") {
    spec.axis = SweepSpec::Axis::StragglerFraction;
  } else if (axis == "lambda") {
    spec.axis = SweepSpec::Axis::Lambda;
  } else if (axis == "r_hat") {
    spec.axis = SweepSpec::Axis::RHat;
  } else {
    throw ConfigError("sweep.axis",
                      "'" + axis + "' is not snr_db|pi|straggler_fraction|lambda|r_hat");
  }
  spec.values = map.get_double_list("sweep.values");
  if (spec.values.empty()) throw ConfigError("sweep.values", "must be nonempty");
  spec.repeats = map.get_int("sweep.repeats", 1);
  if (spec.repeats < 1) throw ConfigError("sweep.repeats", "must be >= 1");
  if (map.has("sweep.variants")) {
    for (const auto& name : map.get_string_list("sweep.variants")) {
      auto v = variant_from_name(name);
      if (!v) throw ConfigError("sweep.variants", "'" + name + "' is not a known variant");
      spec.variants.push_back(*v);
    }
  }
  spec.base = run_config_from_map(map);
  return spec;
}

RunConfig apply_sweep_cell(const SweepSpec& spec, int value_index, int repeat,
                           ProtocolVariant variant) {
  RunConfig cfg = spec.base;
  cfg.variant = variant;
  const double value = spec.values[value_index];
  switch (spec.axis) {
    case SweepSpec::Axis::SnrDb:
      cfg.snr_db = value;
      cfg.channel.sigma2 = 0.0;
      break;
    case SweepSpec::Axis::Pi:
      cfg.pi = value;
      break;
    case SweepSpec::Axis::StragglerFraction:
      cfg.straggler.fraction = value;
      break;
    case SweepSpec::Axis::Lambda:
      cfg.lambda = value;
      break;
    case SweepSpec::Axis::RHat:
      cfg.channel.r_hat = value;
      cfg.channel.fading = true;
      break;
  }
  // One seed per (value, repeat) cell; variants inside a cell share it so
  // comparisons are paired.
  cfg.master_seed = derive_seed(spec.base.master_seed, Stream::SweepCell,
                                static_cast<std::uint64_t>(value_index),
                                static_cast<std::uint64_t>(repeat));
  return cfg;
}

}  // namespace otafl
