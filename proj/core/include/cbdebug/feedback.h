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

#ifndef CBDEBUG_FEEDBACK_H_
#define CBDEBUG_FEEDBACK_H_

#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cbdebug/cbm.h"
#include "cbdebug/synthdata.h"

namespace cbdebug {

enum class FeedbackSource { kHuman = 0, kRuleOracle = 1, kLlmOracle = 2 };
enum class Verdict { kNotSpurious = 0, kSpurious = 1, kAbstain = 2 };

const char* FeedbackSourceName(FeedbackSource s);
FeedbackSource ParseFeedbackSource(const std::string& s);
const char* VerdictName(Verdict v);

struct ConceptVerdict {
  Verdict verdict = Verdict::kNotSpurious;
  std::string justification;

  bool operator==(const ConceptVerdict&) const = default;
};

struct FeedbackSet {
  std::set<int> c_spur;
  FeedbackSource source = FeedbackSource::kHuman;
  std::map<int, ConceptVerdict> verdicts;
  std::string created_at;

  bool operator==(const FeedbackSet&) const = default;
};

// V-hat: activations of the marked concepts on the train split.
struct AuxLabels {
  Eigen::MatrixXd v;               // N_train x |c_spur|
  std::vector<int> concept_order;  // column j <-> concept_order[j]
  std::vector<int> sample_order;   // row i <-> dataset row sample_order[i]

  bool operator==(const AuxLabels& o) const {
    return v == o.v && concept_order == o.concept_order &&
           sample_order == o.sample_order;
  }
};

// Feedback entered by a person: every presented concept gets a verdict.
// Throws UnknownConceptError for ids outside the model.
FeedbackSet HumanFeedback(const ConceptBottleneck& model,
                          const std::set<int>& c_spur,
                          const std::vector<int>& presented);

// Columns follow ascending concept id; rows follow the train split.
AuxLabels LabelAux(const ConceptBottleneck& model, const Dataset& ds,
                   const FeedbackSet& fb);

// Background share of mean |attribution| over the exemplars of `e`.
double BackgroundShare(const ConceptExplanation& e,
                       const std::vector<SegmentRole>& roles);

// Marks a concept iff its background share exceeds `threshold`.
FeedbackSet RuleOracle(const ConceptBottleneck& model, const Dataset& ds,
                       const std::vector<ConceptExplanation>& explanations,
                       double threshold = 0.5);

void SaveFeedback(const FeedbackSet& fb, const std::string& path);
FeedbackSet LoadFeedback(const std::string& path);
void SaveAux(const AuxLabels& aux, const std::string& path);
AuxLabels LoadAux(const std::string& path);

// --- LLM oracle -----------------------------------------------------------

struct LlmEndpointConfig {
  // e.g. "http://localhost:8080/v1"; requests go to base_url + "/chat/completions".
  std::string base_url;
  std::string api_key;  // sent as "Authorization: Bearer <key>" when set
  std::string model = "gpt-4o";
  int timeout_seconds = 30;

  // CBDEBUG_LLM_URL / CBDEBUG_LLM_KEY.
  static LlmEndpointConfig FromEnv();
};

struct NamedConcept {
  int id = 0;
  std::string name;
};

// System prompt template with {classification_task_description}.
const std::string& SystemPromptTemplate();
std::string SystemPrompt(const std::string& task_description);

// Built-in task descriptions: "waterbirds", "metashift", "celeba".
std::string TaskDescription(const std::string& dataset);

// Reads <dir>/system.txt and <dir>/tasks/<dataset>.txt style templates.
std::string LoadPromptFile(const std::string& path);

// Leading SPURIOUS / NOT SPURIOUS token, case-insensitive; else abstain.
Verdict ParseVerdict(const std::string& reply);

// One request per concept, in id order. Abstains are recorded and reported
// through `warnings`; they count as not spurious.
FeedbackSet LlmOracle(const std::vector<NamedConcept>& concepts,
                      const std::string& task_description,
                      const LlmEndpointConfig& endpoint,
                      std::vector<std::string>* warnings = nullptr);

}  // namespace cbdebug

#endif  // CBDEBUG_FEEDBACK_H_
