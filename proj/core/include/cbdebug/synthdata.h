/*
 * Copyright 2026 The cbdebug Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CBDEBUG_SYNTHDATA_H_
#define CBDEBUG_SYNTHDATA_H_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cbdebug {

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };
enum class SegmentRole { kCore = 0, kBackground = 1 };

const char* SplitName(Split s);
const char* SegmentRoleName(SegmentRole r);

using GroupKey = std::pair<int, int>;  // (y, a)

struct DatasetConfig {
  int n_classes = 2;
  int n_spurious_attrs = 2;
  // Train-split counts. Missing cells are zero.
  std::map<GroupKey, int> group_counts;
  int segments = 8;
  int segment_dim = 4;
  // The first `core_segments` segments are core, the rest background.
  int core_segments = 2;
  double core_signal_strength = 1.2;
  double spurious_signal_strength = 2.0;
  double noise_std = 1.0;
  // Val/test are balanced over every (y, a) cell.
  int val_per_group = 100;
  int test_per_group = 250;
  uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void Validate() const;

  bool operator==(const DatasetConfig&) const = default;
};

struct Dataset {
  DatasetConfig config;
  Eigen::MatrixXd features;  // N x (segments * segment_dim)
  std::vector<int> labels;
  std::vector<int> attrs;
  std::vector<Split> split;
  std::vector<SegmentRole> segment_roles;

  int size() const { return static_cast<int>(labels.size()); }
  int n_segments() const { return static_cast<int>(segment_roles.size()); }
  int segment_dim() const { return config.segment_dim; }
  int n_features() const { return static_cast<int>(features.cols()); }
  int n_classes() const { return config.n_classes; }

  // Row indices of a split, ascending.
  std::vector<int> Indices(Split s) const;
  std::vector<int> TrainIndices() const { return Indices(Split::kTrain); }

  bool operator==(const Dataset& o) const;
};

Dataset GenerateDataset(const DatasetConfig& config);

// Named configurations. "waterbirds" uses the 3498/184/56/1057 train
// proportions; "balanced" puts 250 in every cell; "independent" 1000.
DatasetConfig PresetConfig(const std::string& name, uint64_t seed);
std::vector<std::string> PresetNames();

void SaveDataset(const Dataset& ds, const std::string& path);
Dataset LoadDataset(const std::string& path);

// Subset of rows (features, labels, attrs) of `ds` at `rows`.
Eigen::MatrixXd SelectRows(const Eigen::MatrixXd& m, const std::vector<int>& rows);
std::vector<int> SelectItems(const std::vector<int>& v, const std::vector<int>& rows);

}  // namespace cbdebug

#endif  // CBDEBUG_SYNTHDATA_H_
