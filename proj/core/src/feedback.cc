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

#include "cbdebug/feedback.h"

#include <algorithm>

#include "cbdebug/error.h"
#include "cbdebug/io.h"

namespace cbdebug {

const char* FeedbackSourceName(FeedbackSource s) {
  switch (s) {
    case FeedbackSource::kHuman:
      return "human";
    case FeedbackSource::kRuleOracle:
      return "rule_oracle";
    case FeedbackSource::kLlmOracle:
      return "llm_oracle";
  }
  return "?";
}

FeedbackSource ParseFeedbackSource(const std::string& s) {
  if (s == "human") return FeedbackSource::kHuman;
  if (s == "rule_oracle") return FeedbackSource::kRuleOracle;
  if (s == "llm_oracle") return FeedbackSource::kLlmOracle;
  throw ValidationError("unknown feedback source '" + s + "'");
}

const char* VerdictName(Verdict v) {
  switch (v) {
    case Verdict::kNotSpurious:
      return "not_spurious";
    case Verdict::kSpurious:
      return "spurious";
    case Verdict::kAbstain:
      return "abstain";
  }
  return "?";
}

FeedbackSet HumanFeedback(const ConceptBottleneck& model,
                          const std::set<int>& c_spur,
                          const std::vector<int>& presented) {
  FeedbackSet fb;
  fb.source = FeedbackSource::kHuman;
  fb.created_at = NowIso8601();
  for (int c : presented) {
    if (c < 0 || c >= model.n_concepts()) throw UnknownConceptError(c);
    fb.verdicts[c].verdict = Verdict::kNotSpurious;
  }
  for (int c : c_spur) {
    if (c < 0 || c >= model.n_concepts()) throw UnknownConceptError(c);
    fb.c_spur.insert(c);
    fb.verdicts[c].verdict = Verdict::kSpurious;
  }
  return fb;
}

AuxLabels LabelAux(const ConceptBottleneck& model, const Dataset& ds,
                   const FeedbackSet& fb) {
  if (fb.c_spur.empty()) {
    throw PreconditionError("c_spur is empty: nothing to debug");
  }
  for (int c : fb.c_spur) {
    if (c < 0 || c >= model.n_concepts()) throw UnknownConceptError(c);
  }
  AuxLabels aux;
  aux.sample_order = ds.TrainIndices();
  aux.concept_order.assign(fb.c_spur.begin(), fb.c_spur.end());
  const Eigen::MatrixXd act =
      ConceptActivations(model, SelectRows(ds.features, aux.sample_order));
  aux.v.resize(act.rows(), static_cast<Eigen::Index>(aux.concept_order.size()));
  for (size_t j = 0; j < aux.concept_order.size(); ++j) {
    aux.v.col(j) = act.col(aux.concept_order[j]);
  }
  return aux;
}

double BackgroundShare(const ConceptExplanation& e,
                       const std::vector<SegmentRole>& roles) {
  if (e.segment_attribution.empty()) return 0.0;
  double bg = 0.0, total = 0.0;
  for (size_t s = 0; s < roles.size(); ++s) {
    double mean = 0.0;
    for (const auto& attr : e.segment_attribution) mean += std::abs(attr[s]);
    mean /= static_cast<double>(e.segment_attribution.size());
    total += mean;
    if (roles[s] == SegmentRole::kBackground) bg += mean;
  }
  return total > 0.0 ? bg / total : 0.0;
}

FeedbackSet RuleOracle(const ConceptBottleneck& model, const Dataset& ds,
                       const std::vector<ConceptExplanation>& explanations,
                       double threshold) {
  FeedbackSet fb;
  fb.source = FeedbackSource::kRuleOracle;
  fb.created_at = NowIso8601();
  for (const auto& e : explanations) {
    if (e.concept_id < 0 || e.concept_id >= model.n_concepts()) {
      throw UnknownConceptError(e.concept_id);
    }
    for (const auto& attr : e.segment_attribution) {
      if (attr.size() != ds.segment_roles.size()) {
        throw ValidationError("attribution width does not match segments");
      }
    }
    const double share = BackgroundShare(e, ds.segment_roles);
    ConceptVerdict v;
    v.verdict = share > threshold ? Verdict::kSpurious : Verdict::kNotSpurious;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "background share %.4f", share);
    v.justification = buf;
    if (v.verdict == Verdict::kSpurious) fb.c_spur.insert(e.concept_id);
    fb.verdicts[e.concept_id] = v;
  }
  return fb;
}

}  // namespace cbdebug
