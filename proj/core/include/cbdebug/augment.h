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

#ifndef CBDEBUG_AUGMENT_H_
#define CBDEBUG_AUGMENT_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cbdebug/cbm.h"
#include "cbdebug/feedback.h"
#include "cbdebug/synthdata.h"
#include "cbdebug/weights.h"

namespace cbdebug {

enum class AugmentMode { kCutMix = 0, kMixup = 1 };

const char* AugmentModeName(AugmentMode m);
AugmentMode ParseAugmentMode(const std::string& s);

struct AugmentConfig {
  double gamma = 2.0;
  AugmentMode mode = AugmentMode::kCutMix;
  double mixup_keep = 0.75;
  int k_paste = 5;
  int exemplar_pool_size = 10;
  uint64_t seed = 0;

  void Validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

// gamma = 5 heavy-skew setting.
AugmentConfig HeavySkewAugmentConfig();

struct Paste {
  int concept_id = 0;
  int exemplar_id = 0;
  int segment = 0;  // source and destination slot

  bool operator==(const Paste&) const = default;
};

struct AugmentRecord {
  int sample_id = 0;
  bool augmented = false;
  std::vector<Paste> pastes;  // cutmix
  int concept_id = -1;        // mixup
  int exemplar_id = -1;       // mixup
  double mix_ratio = 0.0;     // mixup: weight of the original sample

  bool operator==(const AugmentRecord&) const = default;
};

struct AugmentationPlan {
  double gamma = 2.0;
  AugmentMode mode = AugmentMode::kCutMix;
  std::vector<double> p_aug;  // aligned with the train split
  std::vector<AugmentRecord> records;

  bool operator==(const AugmentationPlan&) const = default;
};

// inv = max(u) - u; p = (inv / max(inv))^gamma; zeros if max(inv) == 0.
std::vector<double> AugProbabilities(const SampleWeights& weights,
                                     double gamma);

// Augments train rows with probability p_aug. Each train sample draws from
// its own stream (seed, sample id). Labels are never touched.
std::pair<Dataset, AugmentationPlan> BuildPlan(
    const Dataset& ds, const ConceptBottleneck& model,
    const SampleWeights& weights, const FeedbackSet& fb,
    const std::vector<ConceptExplanation>& explanations,
    const AugmentConfig& cfg);

// 100 bins on [0, 1], as CSV.
std::string AugHistogramCsv(const std::vector<double>& p_aug, int bins = 100);

void SavePlan(const AugmentationPlan& plan, const std::string& path);
AugmentationPlan LoadPlan(const std::string& path);

}  // namespace cbdebug

#endif  // CBDEBUG_AUGMENT_H_
