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

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "cbdebug/error.h"
#include "cbdebug/random.h"

namespace cbdebug {
namespace {

// k unit-norm mean vectors in R^d, orthonormal when d >= k.
Eigen::MatrixXd UnitMeans(int k, int d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(d, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < d; ++i) g(i, j) = normal(rng);
  }
  if (d >= k) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
    return q.transpose();
  }
  Eigen::MatrixXd m = g.transpose();
  for (int j = 0; j < k; ++j) m.row(j).normalize();
  return m;
}

}  // namespace

const char* SplitName(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

const char* SegmentRoleName(SegmentRole r) {
  return r == SegmentRole::kCore ? "core" : "background";
}

void DatasetConfig::Validate() const {
  if (n_classes < 2) throw ConfigError("n_classes", "must be >= 2");
  if (n_spurious_attrs < 1) {
    throw ConfigError("n_spurious_attrs", "must be >= 1");
  }
  if (segments < 2) throw ConfigError("segments", "must be >= 2");
  if (core_segments < 1 || core_segments >= segments) {
    throw ConfigError("core_segments",
                      "need at least one core and one background segment");
  }
  if (segment_dim < 1) throw ConfigError("segment_dim", "must be >= 1");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
    throw ConfigError("noise_std", "must be finite and >= 0");
  }
  if (!std::isfinite(core_signal_strength)) {
    throw ConfigError("core_signal_strength", "must be finite");
  }
  if (!std::isfinite(spurious_signal_strength)) {
    throw ConfigError("spurious_signal_strength", "must be finite");
  }
  if (val_per_group < 0) throw ConfigError("val_per_group", "must be >= 0");
  if (test_per_group < 0) throw ConfigError("test_per_group", "must be >= 0");
  std::vector<int> per_class(n_classes, 0);
  for (const auto& [key, count] : group_counts) {
    const auto [y, a] = key;
    if (y < 0 || y >= n_classes || a < 0 || a >= n_spurious_attrs) {
      throw ConfigError("group_counts", "cell (" + std::to_string(y) + "," +
                                            std::to_string(a) +
                                            ") out of range");
    }
    if (count < 0) throw ConfigError("group_counts", "negative count");
    per_class[y] += count;
  }
  for (int y = 0; y < n_classes; ++y) {
    if (per_class[y] == 0) {
      throw ConfigError("group_counts",
                        "class " + std::to_string(y) + " has no samples");
    }
  }
}

std::vector<int> Dataset::Indices(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

bool Dataset::operator==(const Dataset& o) const {
  return config == o.config && features.rows() == o.features.rows() &&
         features.cols() == o.features.cols() && features == o.features &&
         labels == o.labels && attrs == o.attrs && split == o.split &&
         segment_roles == o.segment_roles;
}

Dataset GenerateDataset(const DatasetConfig& config) {
  config.Validate();
  Rng rng(config.seed);
  const int g = config.segments;
  const int d = config.segment_dim;
  const Eigen::MatrixXd mu_y = UnitMeans(config.n_classes, d, rng);
  const Eigen::MatrixXd mu_a = UnitMeans(config.n_spurious_attrs, d, rng);

  Dataset ds;
  ds.config = config;
  for (int j = 0; j < g; ++j) {
    ds.segment_roles.push_back(j < config.core_segments
                                   ? SegmentRole::kCore
                                   : SegmentRole::kBackground);
  }

  std::vector<std::tuple<int, int, Split>> rows;
  auto add_split = [&](Split s, auto count_of) {
    std::vector<std::tuple<int, int, Split>> part;
    for (int y = 0; y < config.n_classes; ++y) {
      for (int a = 0; a < config.n_spurious_attrs; ++a) {
        for (int i = 0; i < count_of(y, a); ++i) part.emplace_back(y, a, s);
      }
    }
    std::shuffle(part.begin(), part.end(), rng);
    rows.insert(rows.end(), part.begin(), part.end());
  };
  add_split(Split::kTrain, [&](int y, int a) {
    auto it = config.group_counts.find({y, a});
    return it == config.group_counts.end() ? 0 : it->second;
  });
  add_split(Split::kVal, [&](int, int) { return config.val_per_group; });
  add_split(Split::kTest, [&](int, int) { return config.test_per_group; });

  const int n = static_cast<int>(rows.size());
  ds.features.resize(n, g * d);
  ds.labels.resize(n);
  ds.attrs.resize(n);
  ds.split.resize(n);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const auto [y, a, s] = rows[i];
    ds.labels[i] = y;
    ds.attrs[i] = a;
    ds.split[i] = s;
    for (int j = 0; j < g; ++j) {
      const bool core = ds.segment_roles[j] == SegmentRole::kCore;
      for (int k = 0; k < d; ++k) {
        const double mean = core ? config.core_signal_strength * mu_y(y, k)
                                 : config.spurious_signal_strength * mu_a(a, k);
        ds.features(i, j * d + k) = mean + config.noise_std * noise(rng);
      }
    }
  }
  return ds;
}

DatasetConfig PresetConfig(const std::string& name, uint64_t seed) {
  DatasetConfig c;
  c.seed = seed;
  if (name == "waterbirds") {
    c.group_counts = {{{0, 0}, 3498}, {{0, 1}, 184}, {{1, 0}, 56},
                      {{1, 1}, 1057}};
  } else if (name == "balanced") {
    c.group_counts = {{{0, 0}, 250}, {{0, 1}, 250}, {{1, 0}, 250},
                      {{1, 1}, 250}};
  } else if (name == "independent") {
    c.group_counts = {{{0, 0}, 1000}, {{0, 1}, 1000}, {{1, 0}, 1000},
                      {{1, 1}, 1000}};
  } else {
    throw ConfigError("preset", "unknown preset '" + name + "'");
  }
  return c;
}

std::vector<std::string> PresetNames() {
  return {"waterbirds", "balanced", "independent"};
}

Eigen::MatrixXd SelectRows(const Eigen::MatrixXd& m,
                           const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

std::vector<int> SelectItems(const std::vector<int>& v,
                             const std::vector<int>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace cbdebug
