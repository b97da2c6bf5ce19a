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

#ifndef CBDEBUG_WEIGHTS_H_
#define CBDEBUG_WEIGHTS_H_

#include <cstdint>
#include <string>
#include <vector>

namespace cbdebug {

struct WeightProvenance {
  std::string method = "permutation";  // permutation | analytic | jtt
  int k_folds = 0;
  int n_permutations = 0;
  uint64_t seed = 0;
  int64_t clip_events = 0;

  bool operator==(const WeightProvenance&) const = default;
};

// Per-sample training weights U, aligned with the train split order.
struct SampleWeights {
  std::vector<double> u;
  WeightProvenance provenance;
  bool mean_normalized = false;

  bool operator==(const SampleWeights&) const = default;
};

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<int64_t> counts;

  std::string ToCsv() const;
  // One line per bin with a proportional bar.
  std::string ToText(int width = 50) const;
};

// Equal-width bins over [lo, hi]; the last bin is closed. Values outside
// the range are clamped into the edge bins.
Histogram MakeHistogram(const std::vector<double>& values, int bins, double lo,
                        double hi);

// Equal-width bins spanning [min, max] of `values`.
Histogram MakeHistogram(const std::vector<double>& values, int bins);

}  // namespace cbdebug

#endif  // CBDEBUG_WEIGHTS_H_
