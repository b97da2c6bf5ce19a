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

#ifndef CBDEBUG_CBM_H_
#define CBDEBUG_CBM_H_

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cbdebug/synthdata.h"
#include "cbdebug/weights.h"

namespace cbdebug {

// Each concept reads a contiguous window of segments (wrapping around).
// window_width == segments gives the dense single-layer extractor.
struct ArchitectureConfig {
  int window_width = 2;
  int concepts_per_window = 2;

  bool operator==(const ArchitectureConfig&) const = default;
};

struct TrainConfig {
  int epochs = 30;
  double lr_extractor = 0.5;
  double lr_head = 0.05;
  double lambda_sparse = 0.02;
  int batch_size = 64;
  uint64_t seed = 0;
  bool freeze_extractor = false;

  void Validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct ConceptMeta {
  int id = 0;
  std::string name;
  std::vector<int> segments;  // receptive window

  bool operator==(const ConceptMeta&) const = default;
};

struct ConceptBottleneck {
  int n_segments = 0;
  int segment_dim = 0;
  Eigen::MatrixXd extractor_weights;  // m x p
  Eigen::VectorXd extractor_bias;     // m
  Eigen::MatrixXd head_weights;       // L x m
  Eigen::VectorXd head_bias;          // L
  std::vector<bool> active_mask;      // m
  std::vector<ConceptMeta> concept_meta;
  TrainConfig train_config;
  std::string parent_run;

  int n_concepts() const { return static_cast<int>(extractor_weights.rows()); }
  int n_features() const { return static_cast<int>(extractor_weights.cols()); }
  int n_classes() const { return static_cast<int>(head_weights.rows()); }

  // m x p 0/1 matrix of trainable extractor entries.
  Eigen::MatrixXd ReceptiveMask() const;

  bool operator==(const ConceptBottleneck&) const;
};

// Seeded N(0, 0.1^2) extractor (inside windows) and head; zero biases.
ConceptBottleneck InitModel(int n_classes, int segments, int segment_dim,
                            const ArchitectureConfig& arch, uint64_t seed);

// Same layout and names as `model`, parameters re-drawn from `seed`.
ConceptBottleneck Reinitialize(const ConceptBottleneck& model, uint64_t seed);

// Names concepts after their windows, e.g. "segments 2-3 (background) #1".
void NameConcepts(ConceptBottleneck& model,
                  const std::vector<SegmentRole>& roles);

// Patches of removed concepts to forget: row r is exemplar sample_ids[r]
// with everything outside concept_ids[r]'s window zeroed. The penalty is
//   lambda_forget * mean_r mean_{j active} (W_j . patch_r)^2,
// i.e. surviving concepts must stop responding to those patches. (Penalising
// the removed concepts themselves would be a no-op: their head columns are
// zero and extractor rows are not shared.)
struct ForgetSet {
  std::vector<int> sample_ids;
  std::vector<int> concept_ids;
  Eigen::MatrixXd features;  // one masked patch per (sample, concept) pair

  bool empty() const { return concept_ids.empty(); }
  bool operator==(const ForgetSet& o) const {
    return sample_ids == o.sample_ids && concept_ids == o.concept_ids &&
           features == o.features;
  }
};

struct LossTerms {
  double lambda_sparse = 0.0;
  double lambda_forget = 0.0;
  const ForgetSet* forget = nullptr;
};

struct Gradient {
  Eigen::MatrixXd extractor_weights;
  Eigen::VectorXd extractor_bias;
  Eigen::MatrixXd head_weights;
  Eigen::VectorXd head_bias;
};

// Full objective
//   (1/N) sum_i w_i CE(h(phi(x_i)), y_i) + lambda_sparse |H|_1
//   + lambda_forget * forget penalty (see ForgetSet).
// `w` must already be normalised (empty = all ones). The gradient is with
// respect to the free parameters: entries outside receptive windows and
// inactive head columns read zero. sign(0) = 0 for the L1 subgradient.
double Loss(const ConceptBottleneck& model, const Eigen::MatrixXd& x,
            const std::vector<int>& y, const std::vector<double>& w,
            const LossTerms& terms, Gradient* grad);

// One SGD update on a batch with already-normalised weights `wb` (empty =
// ones). Returns the batch loss at the pre-update parameters; the model is
// left untouched when that loss is non-finite.
double SgdStep(ConceptBottleneck& model, const Eigen::MatrixXd& xb,
               const std::vector<int>& yb, const std::vector<double>& wb,
               const TrainConfig& cfg, const LossTerms& terms);

using ProgressFn = std::function<void(double)>;

// Per-batch weight hook for strategies that reweight on the fly (LfF). Gets
// the batch row indices and the model about to be updated; returns one raw
// weight per row.
using BatchWeightFn = std::function<std::vector<double>(
    const std::vector<int>& rows, const ConceptBottleneck& model)>;

struct FitOptions {
  const std::vector<double>* weights = nullptr;  // raw, normalised inside
  double lambda_forget = 0.0;
  const ForgetSet* forget = nullptr;
  BatchWeightFn batch_weights;
  // Called once per mini-batch after the update (LfF co-training).
  std::function<void(const std::vector<int>& rows)> after_batch;
  ProgressFn progress;
};

// Mini-batch SGD from `start` on arbitrary rows. Weights are normalised to
// mean one; all-equal weights are treated exactly as no weights.
ConceptBottleneck Fit(const ConceptBottleneck& start, const Eigen::MatrixXd& x,
                      const std::vector<int>& y, const TrainConfig& cfg,
                      const FitOptions& opts = {});

// Trains from scratch on the train split. `weights` aligns with the train
// split order.
ConceptBottleneck Train(const Dataset& ds, const SampleWeights* weights,
                        const TrainConfig& cfg,
                        const ArchitectureConfig& arch = {},
                        ProgressFn progress = {});

Eigen::MatrixXd ConceptActivations(const ConceptBottleneck& model,
                                   const Eigen::MatrixXd& x);

struct Prediction {
  std::vector<int> labels;
  Eigen::MatrixXd scores;  // N x L softmax
};

// Class scores from activations directly; used to probe masking.
Prediction PredictFromActivations(const ConceptBottleneck& model,
                                  const Eigen::MatrixXd& activations);
Prediction Predict(const ConceptBottleneck& model, const Eigen::MatrixXd& x);

struct ConceptExplanation {
  int concept_id = 0;
  std::vector<std::pair<int, double>> top_exemplars;  // (sample id, phi)
  std::vector<std::vector<double>> segment_attribution;

  bool operator==(const ConceptExplanation&) const = default;
};

// Top-k train samples by activation; sample ids are dataset row indices.
ConceptExplanation ExplainConcept(const ConceptBottleneck& model,
                                  const Dataset& ds, int concept_id,
                                  int k = 10);
std::vector<ConceptExplanation> ExplainConcepts(
    const ConceptBottleneck& model, const Dataset& ds,
    const std::vector<int>& concept_ids, int k = 10);

// Concepts the head relies on: active and max |head weight| > floor.
std::vector<int> RelevantConcepts(const ConceptBottleneck& model,
                                  double floor = 0.01);

ConceptBottleneck RemoveConcepts(const ConceptBottleneck& model,
                                 const std::set<int>& c_spur);

void SaveModel(const ConceptBottleneck& model, const std::string& path);
ConceptBottleneck LoadModel(const std::string& path);

}  // namespace cbdebug

#endif  // CBDEBUG_CBM_H_
