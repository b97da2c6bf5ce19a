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

#ifndef CBDEBUG_EVAL_H_
#define CBDEBUG_EVAL_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cbdebug/cbm.h"
#include "cbdebug/feedback.h"
#include "cbdebug/synthdata.h"

namespace cbdebug {

struct GroupMetrics {
  std::map<GroupKey, double> accuracy;
  std::map<GroupKey, int64_t> n;
  double sample_average = 0.0;
  double group_mean = 0.0;
  double worst_group = 0.0;
  std::optional<double> auroc;

  bool operator==(const GroupMetrics&) const = default;
};

// `scores` is N x L; AUROC is computed when L == 2 from column 1.
GroupMetrics ComputeGroupMetrics(const std::vector<int>& preds,
                                 const Eigen::MatrixXd& scores,
                                 const std::vector<int>& y,
                                 const std::vector<int>& a);

// Mann-Whitney statistic; ties count 0.5. Returns 0.5 if a class is absent.
double Auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Predicts on one split and scores it.
GroupMetrics EvaluateModel(const ConceptBottleneck& model, const Dataset& ds,
                           Split split = Split::kTest);

struct ColumnDependence {
  int concept_id = 0;
  // Per class k: cov(v, 1[y=k]) and the matching correlation.
  std::vector<double> cov_unweighted;
  std::vector<double> corr_unweighted;
  std::vector<double> cov_weighted;
  std::vector<double> corr_weighted;
  bool zero_variance = false;
};

struct DependenceReport {
  std::vector<ColumnDependence> columns;
  bool weighted = false;
  std::string formula;
};

// Weighted moments use w = u / mean(u):
//   E_w[z] = (1/N) sum w_i z_i, cov_w = E_w[(v - E_w v)(y_k - E_w y_k)].
DependenceReport ComputeDependenceReport(const AuxLabels& aux,
                                         const std::vector<int>& y,
                                         int n_classes,
                                         const std::vector<double>* u);

struct RankedConcept {
  int concept_id = 0;
  double weight = 0.0;  // signed head weight
  bool changed = false;  // entered (after list) or left (before list)
};

struct ClassConcepts {
  int cls = 0;
  std::vector<RankedConcept> before;
  std::vector<RankedConcept> after;
};

struct ConceptReport {
  int top_n = 5;
  std::vector<ClassConcepts> classes;
};

// Top-n active concepts per class by |head weight|; zero weights excluded.
ConceptReport ComputeConceptReport(const ConceptBottleneck& before,
                                   const ConceptBottleneck& after,
                                   int top_n = 5);

struct RunMetrics {
  GroupMetrics before;
  std::optional<GroupMetrics> after;
  std::optional<ConceptReport> concept_report;
};

void SaveMetrics(const RunMetrics& m, const std::string& path);
RunMetrics LoadMetrics(const std::string& path);

// One row per (run, group): run,stage,y,a,n,accuracy.
std::string MetricsCsv(const std::string& run_id, const RunMetrics& m);

struct CompareRow {
  std::string run_id;
  std::string stage;  // before / after
  GroupMetrics metrics;
};

std::string CompareTableText(const std::vector<CompareRow>& rows);
std::string CompareTableCsv(const std::vector<CompareRow>& rows);

}  // namespace cbdebug

#endif  // CBDEBUG_EVAL_H_
