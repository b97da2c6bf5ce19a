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

#include "cbdebug/synthdata.h"

#include <map>

#include "cbdebug/error.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace cbdebug {
namespace {

using testing_util::SmallConfig;

TEST(Synthdata, GroupCountsPerSplit) {
  const DatasetConfig cfg = SmallConfig();
  const Dataset ds = GenerateDataset(cfg);
  std::map<std::pair<Split, GroupKey>, int> counts;
  for (int i = 0; i < ds.size(); ++i) {
    ++counts[{ds.split[i], {ds.labels[i], ds.attrs[i]}}];
  }
  for (const auto& [key, n] : cfg.group_counts) {
    EXPECT_EQ((counts[{Split::kTrain, key}]), n);
    EXPECT_EQ((counts[{Split::kVal, key}]), cfg.val_per_group);
    EXPECT_EQ((counts[{Split::kTest, key}]), cfg.test_per_group);
  }
  EXPECT_EQ(ds.n_features(), cfg.segments * cfg.segment_dim);
  EXPECT_EQ(ds.n_segments(), cfg.segments);
}

TEST(Synthdata, WaterbirdsPreset) {
  const DatasetConfig cfg = PresetConfig("waterbirds", 1);
  EXPECT_EQ((cfg.group_counts.at({0, 0})), 3498);
  EXPECT_EQ((cfg.group_counts.at({0, 1})), 184);
  EXPECT_EQ((cfg.group_counts.at({1, 0})), 56);
  EXPECT_EQ((cfg.group_counts.at({1, 1})), 1057);
  EXPECT_THROW(PresetConfig("imagenet", 1), ConfigError);
  for (const auto& name : PresetNames()) EXPECT_NO_THROW(PresetConfig(name, 0));
}

TEST(Synthdata, SegmentRoles) {
  const Dataset ds = GenerateDataset(SmallConfig());
  int core = 0;
  for (SegmentRole r : ds.segment_roles) core += r == SegmentRole::kCore;
  EXPECT_EQ(core, 2);
}

TEST(Synthdata, DeterministicPerSeed) {
  EXPECT_EQ(GenerateDataset(SmallConfig(3)), GenerateDataset(SmallConfig(3)));
  EXPECT_FALSE(GenerateDataset(SmallConfig(3)) ==
               GenerateDataset(SmallConfig(4)));
}

// Core segments separate y, background segments separate a, in the
// direction of the planted means.
TEST(Synthdata, PlantedSignalsLiveWhereTheRolesSay) {
  DatasetConfig cfg = PresetConfig("balanced", 5);
  const Dataset ds = GenerateDataset(cfg);
  const int d = cfg.segment_dim;
  for (int s = 0; s < ds.n_segments(); ++s) {
    Eigen::VectorXd by_y[2] = {Eigen::VectorXd::Zero(d),
                               Eigen::VectorXd::Zero(d)};
    Eigen::VectorXd by_a[2] = {Eigen::VectorXd::Zero(d),
                               Eigen::VectorXd::Zero(d)};
    int ny[2] = {0, 0}, na[2] = {0, 0};
    for (int i = 0; i < ds.size(); ++i) {
      const Eigen::VectorXd seg = ds.features.row(i).segment(s * d, d);
      by_y[ds.labels[i]] += seg;
      ++ny[ds.labels[i]];
      by_a[ds.attrs[i]] += seg;
      ++na[ds.attrs[i]];
    }
    const double dy = (by_y[0] / ny[0] - by_y[1] / ny[1]).norm();
    const double da = (by_a[0] / na[0] - by_a[1] / na[1]).norm();
    if (ds.segment_roles[s] == SegmentRole::kCore) {
      EXPECT_GT(dy, 1.0) << "segment " << s;
      EXPECT_LT(da, 0.25) << "segment " << s;
    } else {
      EXPECT_GT(da, 1.5) << "segment " << s;
      EXPECT_LT(dy, 0.25) << "segment " << s;
    }
  }
}

TEST(Synthdata, ValidationNamesTheField) {
  DatasetConfig cfg = SmallConfig();
  cfg.core_segments = cfg.segments;
  try {
    cfg.Validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "core_segments");
  }
  cfg = SmallConfig();
  cfg.group_counts[{0, 1}] = -1;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = SmallConfig();
  cfg.group_counts[{2, 0}] = 5;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = SmallConfig();
  cfg.noise_std = -1;
  EXPECT_THROW(GenerateDataset(cfg), ConfigError);
  cfg = SmallConfig();
  cfg.group_counts = {{{0, 0}, 10}, {{0, 1}, 10}};
  EXPECT_THROW(cfg.Validate(), ConfigError);
}

TEST(Synthdata, EmptyCellIsAllowed) {
  DatasetConfig cfg = SmallConfig();
  cfg.group_counts[{1, 0}] = 0;
  const Dataset ds = GenerateDataset(cfg);
  for (int i : ds.TrainIndices()) {
    EXPECT_FALSE(ds.labels[i] == 1 && ds.attrs[i] == 0);
  }
}

TEST(Synthdata, SelectHelpers) {
  Eigen::MatrixXd m(3, 2);
  m << 1, 2, 3, 4, 5, 6;
  const Eigen::MatrixXd s = SelectRows(m, {2, 0});
  EXPECT_EQ(s(0, 0), 5);
  EXPECT_EQ(s(1, 1), 2);
  EXPECT_EQ(SelectItems({7, 8, 9}, {1, 1, 2}), (std::vector<int>{8, 8, 9}));
}

}  // namespace
}  // namespace cbdebug
