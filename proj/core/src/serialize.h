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

// JSON conversions for every persisted type. Private to the library: the
// public headers stay free of the JSON dependency.

#ifndef CBDEBUG_SRC_SERIALIZE_H_
#define CBDEBUG_SRC_SERIALIZE_H_

#include <string>

#include "cbdebug/augment.h"
#include "cbdebug/cbm.h"
#include "cbdebug/eval.h"
#include "cbdebug/feedback.h"
#include "cbdebug/permweight.h"
#include "cbdebug/retrain.h"
#include "cbdebug/run_store.h"
#include "cbdebug/synthdata.h"
#include "cbdebug/weights.h"
#include "json.hpp"

namespace cbdebug::serial {

using nlohmann::json;

inline constexpr char kDatasetVersion[] = "cbdebug-ds-1";
inline constexpr char kModelVersion[] = "cbdebug-model-1";
inline constexpr char kWeightsVersion[] = "cbdebug-w-1";
inline constexpr char kPlanVersion[] = "cbdebug-aug-1";
inline constexpr char kFeedbackVersion[] = "cbdebug-fb-1";
inline constexpr char kAuxVersion[] = "cbdebug-aux-1";
inline constexpr char kForgetVersion[] = "cbdebug-forget-1";
inline constexpr char kMetricsVersion[] = "cbdebug-metrics-1";
inline constexpr char kRunVersion[] = "cbdebug-run-1";

// Parses `path` and checks its version tag. Malformed -> SchemaError,
// wrong tag -> VersionError.
json LoadVersioned(const std::string& path, const char* version);
void SaveJson(const std::string& path, const json& j, int indent = -1);

// Config parsers start from `base` and override present keys; unknown keys
// raise ValidationError.
json ToJson(const DatasetConfig& c);
DatasetConfig DatasetConfigFromJson(const json& j, DatasetConfig base = {});
json ToJson(const TrainConfig& c);
TrainConfig TrainConfigFromJson(const json& j, TrainConfig base = {});
json ToJson(const ArchitectureConfig& c);
ArchitectureConfig ArchitectureFromJson(const json& j,
                                        ArchitectureConfig base = {});
json ToJson(const PermWeightConfig& c);
PermWeightConfig PermWeightConfigFromJson(const json& j,
                                          PermWeightConfig base = {});
json ToJson(const AugmentConfig& c);
AugmentConfig AugmentConfigFromJson(const json& j, AugmentConfig base = {});
json ToJson(const StrategyConfig& c);
StrategyConfig StrategyConfigFromJson(const json& j, StrategyConfig base = {});

json ToJson(const Dataset& ds);
Dataset DatasetFromJson(const json& j);
json ToJson(const ConceptBottleneck& m);
ConceptBottleneck ModelFromJson(const json& j);
json ToJson(const FeedbackSet& fb);
FeedbackSet FeedbackFromJson(const json& j);
json ToJson(const AuxLabels& aux);
AuxLabels AuxFromJson(const json& j);
json ToJson(const SampleWeights& w);
SampleWeights WeightsFromJson(const json& j);
json ToJson(const AugmentationPlan& p);
AugmentationPlan PlanFromJson(const json& j);
json ToJson(const ForgetSet& f);
ForgetSet ForgetSetFromJson(const json& j);

json ToJson(const GroupMetrics& m);
GroupMetrics GroupMetricsFromJson(const json& j);
json ToJson(const ConceptReport& r);
ConceptReport ConceptReportFromJson(const json& j);
json ToJson(const RunMetrics& m);
RunMetrics RunMetricsFromJson(const json& j);

json ToJson(const ConceptExplanation& e);
json ToJson(const Histogram& h);
json ToJson(const RunRecord& r);
RunRecord RunRecordFromJson(const json& j);

}  // namespace cbdebug::serial

#endif  // CBDEBUG_SRC_SERIALIZE_H_
