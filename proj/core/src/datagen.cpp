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

#include "otafl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace otafl {

void validate_dataset(const Dataset& ds) {
  if (ds.n <= 0) throw std::invalid_argument("dataset: n must be positive");
  if (ds.m <= 0) throw std::invalid_argument("dataset: m must be positive");
  if (ds.num_classes <= 0)
    throw std::invalid_argument("dataset: num_classes must be positive");
  if (ds.features.size() != static_cast<std::size_t>(ds.n) * ds.m)
    throw std::invalid_argument("dataset: feature buffer size mismatch");
  if (ds.labels.size() != static_cast<std::size_t>(ds.n))
    throw std::invalid_argument("dataset: label count mismatch");
  for (int y : ds.labels)
    if (y < 0 || y >= ds.num_classes)
      throw std::invalid_argument("dataset: label out of range");
  for (double v : ds.features)
    if (!std::isfinite(v))
      throw std::invalid_argument("dataset: non-finite feature value");
}

Dataset gen_synthetic_classification(int n, int m, int num_classes,
                                     double separation, std::uint64_t seed) {
  if (n <= 0 || m <= 0 || num_classes <= 0)
    throw std::invalid_argument("gen_synthetic_classification: dims must be positive");
  if (n < num_classes)
    throw std::invalid_argument("gen_synthetic_classification: need n >= num_classes");
  if (separation < 0)
    throw std::invalid_argument("gen_synthetic_classification: separation must be >= 0");

  // Cluster means. With C <= m, mean_c = (sep/sqrt(2)) * e_c gives every
  // pair distance exactly `separation`; otherwise means are spaced along
  // axis 0 at adjacent distance `separation`.
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(m, 0.0));
  if (num_classes <= m) {
    double scale = separation / std::sqrt(2.0);
    for (int c = 0; c < num_classes; ++c) means[c][c] = scale;
  } else {
    for (int c = 0; c < num_classes; ++c) means[c][0] = separation * c;
  }

  // Balanced labels (first n % C classes get the extra sample), then a
  // seeded shuffle so the row order carries no class structure.
  std::vector<int> labels;
  labels.reserve(n);
  int base = n / num_classes, extra = n % num_classes;
  for (int c = 0; c < num_classes; ++c)
    for (int i = 0; i < base + (c < extra ? 1 : 0); ++i) labels.push_back(c);

  Rng rng(splitmix64(seed ^ 0x64617461ULL));
  rng.shuffle(labels);

  Dataset ds;
  ds.n = n;
  ds.m = m;
  ds.num_classes = num_classes;
  ds.labels = labels;
  ds.features.resize(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    const auto& mu = means[labels[i]];
    double* row = ds.features.data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) row[j] = mu[j] + rng.normal();
  }
  return ds;
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<int>& idx) {
  Dataset out;
  out.n = static_cast<int>(idx.size());
  out.m = ds.m;
  out.num_classes = ds.num_classes;
  out.labels.reserve(idx.size());
  out.features.reserve(idx.size() * static_cast<std::size_t>(ds.m));
  for (int i : idx) {
    out.labels.push_back(ds.labels[i]);
    const double* row = ds.row(i);
    out.features.insert(out.features.end(), row, row + ds.m);
  }
  return out;
}

}  // namespace

PartitionResult partition_heterogeneous(const Dataset& ds, const PartitionSpec& spec,
                                        bool strict) {
  validate_dataset(ds);
  if (spec.clients < 1)
    throw std::invalid_argument("partition: clients must be >= 1");
  if (spec.pi < 0.0 || spec.pi > 1.0)
    throw std::invalid_argument("partition: pi must lie in [0, 1]");
  if (ds.n < spec.clients)
    throw std::invalid_argument("partition: fewer samples than clients");

  const int K = spec.clients;
  const int C = ds.num_classes;
  Rng rng(derive_seed(spec.seed, Stream::Partition));

  // Per-class index pools, each independently shuffled. Pools are consumed
  // from the back.
  std::vector<std::vector<int>> pool(C);
  for (int i = 0; i < ds.n; ++i) pool[ds.labels[i]].push_back(i);
  for (auto& p : pool) rng.shuffle(p);

  std::vector<int> shard_size(K, ds.n / K);
  for (int k = 0; k < ds.n % K; ++k) shard_size[k] += 1;

  auto pop_from = [&](int c) {
    int idx = pool[c].back();
    pool[c].pop_back();
    return idx;
  };
  auto most_plentiful = [&]() {
    int best = -1;
    std::size_t best_n = 0;
    for (int c = 0; c < C; ++c)
      if (pool[c].size() > best_n) {
        best = c;
        best_n = pool[c].size();
      }
    return best;
  };

  PartitionResult result;
  result.clients.resize(K);
  std::vector<std::vector<int>> assigned(K);

  // Pass 1: home quotas. Client k draws round((1-pi)*size) samples from
  // class k mod C; shortfalls fall back to the most plentiful class.
  for (int k = 0; k < K; ++k) {
    auto& info = result.clients[k];
    info.client_id = k;
    info.size = shard_size[k];
    info.home_label = k % C;
    info.home_quota = static_cast<int>(std::llround((1.0 - spec.pi) * shard_size[k]));
    auto& mine = assigned[k];
    for (int j = 0; j < info.home_quota; ++j) {
      if (!pool[info.home_label].empty()) {
        mine.push_back(pop_from(info.home_label));
      } else {
        if (strict) {
          std::ostringstream os;
          os << "partition: class " << info.home_label
             << " exhausted while filling home quota of client " << k;
          throw std::runtime_error(os.str());
        }
        mine.push_back(pop_from(most_plentiful()));
        info.home_substituted += 1;
      }
    }
  }

  // Pass 2: the shared pi fraction, drawn class-balanced from whatever
  // remains (greedy most-plentiful, ties to the lowest class id). At pi=1
  // this degenerates to an equal-per-class IID split.
  for (int k = 0; k < K; ++k) {
    auto& mine = assigned[k];
    while (static_cast<int>(mine.size()) < shard_size[k])
      mine.push_back(pop_from(most_plentiful()));
  }

  for (int k = 0; k < K; ++k) {
    auto& info = result.clients[k];
    info.class_histogram.assign(C, 0);
    for (int i : assigned[k]) info.class_histogram[ds.labels[i]] += 1;
    rng.shuffle(assigned[k]);  // decouple row order from allocation order
    ClientShard shard;
    shard.client_id = k;
    shard.weight = static_cast<double>(shard_size[k]) / ds.n;
    shard.data = take_rows(ds, assigned[k]);
    result.shards.push_back(std::move(shard));
  }
  return result;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

Dataset load_csv_dataset(const std::string& path, const CsvLoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv_dataset: cannot open " + path);

  std::string header;
  if (!std::getline(in, header))
    throw ParseError("load_csv_dataset: empty file " + path, 0, "");
  auto names = split_csv_line(header);
  for (auto& s : names) s = trim(s);

  auto column_index = [&](const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
      throw ConfigError(name, "column not present in " + path);
    return static_cast<int>(it - names.begin());
  };

  int label_col = column_index(opts.label_column);
  std::vector<int> feat_cols;
  if (opts.feature_columns.empty()) {
    for (int j = 0; j < static_cast<int>(names.size()); ++j)
      if (j != label_col) feat_cols.push_back(j);
  } else {
    for (const auto& name : opts.feature_columns) feat_cols.push_back(column_index(name));
  }
  if (feat_cols.empty())
    throw ConfigError("feature_columns", "no feature columns selected");

  Dataset ds;
  ds.m = static_cast<int>(feat_cols.size());
  std::string line;
  long row = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto fields = split_csv_line(line);
    if (fields.size() != names.size()) {
      std::ostringstream os;
      os << "row " << row << ": expected " << names.size() << " fields, got "
         << fields.size();
      throw ParseError(os.str(), row, "");
    }
    const std::string label_raw = trim(fields[label_col]);
    char* end = nullptr;
    long y = std::strtol(label_raw.c_str(), &end, 10);
    if (label_raw.empty() || end == nullptr || *end != '\0') {
      std::ostringstream os;
      os << "row " << row << ": label '" << label_raw << "' is not an integer";
      throw ParseError(os.str(), row, opts.label_column);
    }
    if (y < 0) {
      std::ostringstream os;
      os << "row " << row << ": label must be >= 0";
      throw ParseError(os.str(), row, opts.label_column);
    }
    ds.labels.push_back(static_cast<int>(y));
    max_label = std::max(max_label, static_cast<int>(y));
    for (int j : feat_cols) {
      const std::string raw = trim(fields[j]);
      double v = std::strtod(raw.c_str(), &end);
      if (raw.empty() || end == nullptr || *end != '\0' || !std::isfinite(v)) {
        std::ostringstream os;
        os << "row " << row << ": value '" << raw << "' in column '" << names[j]
           << "' is not a finite real";
        throw ParseError(os.str(), row, names[j]);
      }
      ds.features.push_back(v);
    }
  }
  ds.n = static_cast<int>(ds.labels.size());
  ds.num_classes = max_label + 1;
  if (ds.n == 0) throw ParseError("load_csv_dataset: no data rows", 0, "");

  if (opts.normalize) {
    for (int j = 0; j < ds.m; ++j) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int i = 0; i < ds.n; ++i) {
        double v = ds.features[static_cast<std::size_t>(i) * ds.m + j];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      double range = hi - lo;
      if (range <= 0) range = 1.0;
      for (int i = 0; i < ds.n; ++i) {
        auto& v = ds.features[static_cast<std::size_t>(i) * ds.m + j];
        v = (v - lo) / range;
      }
    }
  }
  validate_dataset(ds);
  return ds;
}

void export_csv_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_csv_dataset: cannot open " + path);
  out << "label";
  for (int j = 0; j < ds.m; ++j) out << ",f" << j;
  out << "\n";
  char buf[32];
  for (int i = 0; i < ds.n; ++i) {
    out << ds.labels[i];
    const double* row = ds.row(i);
    for (int j = 0; j < ds.m; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[j]);
      out << ',' << buf;
    }
    out << "\n";
  }
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double test_fraction,
                                          std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("split_dataset: test_fraction must lie in [0, 1)");
  std::vector<int> idx(ds.n);
  for (int i = 0; i < ds.n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, Stream::Split));
  rng.shuffle(idx);
  int n_test = static_cast<int>(std::llround(test_fraction * ds.n));
  std::vector<int> test_idx(idx.begin(), idx.begin() + n_test);
  std::vector<int> train_idx(idx.begin() + n_test, idx.end());
  Dataset train = take_rows(ds, train_idx);
  Dataset test = n_test > 0 ? take_rows(ds, test_idx) : Dataset{{}, {}, 0, ds.m, ds.num_classes};
  return {std::move(train), std::move(test)};
}

}  // namespace otafl
