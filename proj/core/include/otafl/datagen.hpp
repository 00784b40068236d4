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

namespace otafl {

/// Labeled dense dataset. Features are row-major n x m, labels are class
/// ids in [0, num_classes).
struct Dataset {
  std::vector<double> features;
  std::vector<int> labels;
  int n = 0;
  int m = 0;
  int num_classes = 0;

  const double* row(int i) const { return features.data() + static_cast<std::size_t>(i) * m; }
};

/// Throws std::invalid_argument on any structural violation (empty set,
/// label out of range, non-finite feature).
void validate_dataset(const Dataset& ds);

/// One client's slice of the training data. weight = D_k / D.
struct ClientShard {
  Dataset data;
  int client_id = 0;
  double weight = 0.0;
};

struct PartitionSpec {
  int clients = 1;        // K
  double pi = 0.5;        // label similarity in [0, 1]; 1 = IID
  std::uint64_t seed = 0;
};

/// Per-client bookkeeping emitted as the partition manifest.
struct PartitionClientInfo {
  int client_id = 0;
  int size = 0;
  int home_label = 0;
  int home_quota = 0;        // samples allocated under the (1-pi) rule
  int home_substituted = 0;  // home-quota samples filled from other classes
  std::vector<int> class_histogram;
};

struct PartitionResult {
  std::vector<ClientShard> shards;
  std::vector<PartitionClientInfo> clients;
};

/// C isotropic Gaussian clusters with pairwise mean distance `separation`
/// (means sit on scaled coordinate axes while C <= m, on a line otherwise).
/// Class counts are balanced to within one sample; sample order is a seeded
/// shuffle. Pure function of its arguments.
Dataset gen_synthetic_classification(int n, int m, int num_classes,
                                     double separation, std::uint64_t seed);

/// Label-skew partition: client k's home label is k mod C; a
/// round((1-pi)*size) quota comes from the home class, the rest is filled
/// class-balanced from whatever remains (home class included). pi=1 gives an
/// equal-per-class IID split. Shards are a disjoint cover of the dataset.
///
/// When a home class runs dry the quota is topped up from the most plentiful
/// class and recorded in PartitionClientInfo::home_substituted; with
/// strict=true the same condition throws instead, naming the class.
PartitionResult partition_heterogeneous(const Dataset& ds, const PartitionSpec& spec,
                                        bool strict = false);

struct CsvLoadOptions {
  std::string label_column;
  std::vector<std::string> feature_columns;  // empty = all non-label columns
  bool normalize = false;                    // min-max per feature column
};

/// Header row required; '.' decimal separator. Parse failures raise
/// ParseError citing the 1-based data row; a missing column raises
/// ConfigError naming it.
Dataset load_csv_dataset(const std::string& path, const CsvLoadOptions& opts);

void export_csv_dataset(const Dataset& ds, const std::string& path);

/// Seeded IID split; the second part receives round(test_fraction * n) rows.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double test_fraction,
                                          std::uint64_t seed);

}  // namespace otafl
