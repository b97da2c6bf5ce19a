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

#ifndef CBDEBUG_RETRAIN_H_
#define CBDEBUG_RETRAIN_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cbdebug/augment.h"
#include "cbdebug/cbm.h"
#include "cbdebug/feedback.h"
#include "cbdebug/permweight.h"
#include "cbdebug/synthdata.h"

namespace cbdebug {

enum class Strategy {
  kRemove = 0,
  kRetrain,
  kProtoPDebug,
  kReweightOnly,
  kAugmentOnly,
  kCbDebug,
  kJtt,
  kLff,
};

const char* StrategyName(Strategy s);
// Throws ValidationError on unknown names.
Strategy ParseStrategy(const std::string& s);
std::vector<Strategy> AllStrategies();
// JTT and LfF run without expert feedback.
bool UsesFeedback(Strategy s);

struct ProtoPDebugConfig {
  double lambda_forget = 1.0;
  bool operator==(const ProtoPDebugConfig&) const = default;
};

struct JttConfig {
  int T = 10;
  double lambda_up = 25.0;
  bool operator==(const JttConfig&) const = default;
};

struct LffConfig {
  double q = 0.9;
  bool operator==(const LffConfig&) const = default;
};

struct StrategyConfig {
  Strategy strategy = Strategy::kCbDebug;
  int retrain_epochs = 0;  // 0: half of the original epochs (at least 1)
  // Fine-tuning divides the original extractor rate by this.
  double extractor_lr_divisor = 50.0;
  bool freeze_extractor = false;
  PermWeightConfig permweight;
  AugmentConfig augment;
  ProtoPDebugConfig protopdebug;
  JttConfig jtt;
  LffConfig lff;
  uint64_t seed = 1;

  void Validate() const;
  bool operator==(const StrategyConfig&) const = default;
};

struct RunArtifacts {
  ConceptBottleneck model_before;
  std::vector<int> removed;
  std::optional<AuxLabels> aux;
  std::optional<SampleWeights> weights;
  std::optional<AugmentationPlan> plan;
  std::optional<ForgetSet> forget_set;
  std::vector<std::string> log;
};

struct StrategyResult {
  ConceptBottleneck model;
  RunArtifacts artifacts;
};

// Fine-tune schedule derived from the original run.
TrainConfig FineTuneConfig(const TrainConfig& original,
                           const StrategyConfig& cfg);

// `fb` must be null for JTT/LfF and non-null (and valid) for the rest.
StrategyResult RunStrategy(const ConceptBottleneck& model, const Dataset& ds,
                           const FeedbackSet* fb, const StrategyConfig& cfg,
                           ProgressFn progress = {});

void SaveForgetSet(const ForgetSet& f, const std::string& path);
ForgetSet LoadForgetSet(const std::string& path);

}  // namespace cbdebug

#endif  // CBDEBUG_RETRAIN_H_
