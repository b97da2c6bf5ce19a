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

#ifndef CBDEBUG_RUN_STORE_H_
#define CBDEBUG_RUN_STORE_H_

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cbdebug/cbm.h"
#include "cbdebug/error.h"
#include "cbdebug/eval.h"
#include "cbdebug/feedback.h"
#include "cbdebug/retrain.h"
#include "cbdebug/synthdata.h"
#include "cbdebug/weights.h"

namespace cbdebug {

enum class RunStatus { kIdle = 0, kTraining, kRetraining, kDone, kFailed };

const char* RunStatusName(RunStatus s);
RunStatus ParseRunStatus(const std::string& s);

// idle->training->done, done->retraining->done|failed; training->failed on
// error; failed->retraining retries a run whose model_before survived.
bool IsValidTransition(RunStatus from, RunStatus to);

class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A mutation was requested while another one is in flight (HTTP 409).
class ConflictError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct RunRecord {
  std::string run_id;
  std::string preset;
  std::string dataset_ref;
  std::string model_before_ref;
  std::string model_after_ref;
  std::string feedback_ref;
  std::string metrics_ref;
  RunStatus status = RunStatus::kIdle;
  double progress = 0.0;
  std::string message;
  ArchitectureConfig arch;
  TrainConfig train_config;
  std::optional<StrategyConfig> strategy;
  std::string created_at;
  std::string updated_at;
};

// Standard file names inside runs/<id>/.
namespace files {
inline constexpr char kRun[] = "run.json";
inline constexpr char kDataset[] = "dataset.json";
inline constexpr char kModelBefore[] = "model_before.json";
inline constexpr char kModelAfter[] = "model_after.json";
inline constexpr char kFeedback[] = "feedback.json";
inline constexpr char kAux[] = "aux.json";
inline constexpr char kWeights[] = "weights.json";
inline constexpr char kPlan[] = "plan.json";
inline constexpr char kForgetSet[] = "forget_set.json";
inline constexpr char kMetrics[] = "metrics.json";
inline constexpr char kMetricsCsv[] = "metrics.csv";
inline constexpr char kLog[] = "log.txt";
inline constexpr char kLock[] = "job.lock";
}  // namespace files

struct ConceptInfo {
  int concept_id = 0;
  std::string name;
  std::vector<double> head_weights;  // per class
  bool active = true;
  ConceptExplanation explanation;
};

// Plain-file persistence under a runs directory. Every write is atomic.
class RunStore {
 public:
  explicit RunStore(std::string root);

  const std::string& root() const { return root_; }
  std::string RunDir(const std::string& run_id) const;
  std::string Path(const std::string& run_id, const std::string& file) const;

  bool Exists(const std::string& run_id) const;
  // Sorted by run id. Unreadable run directories come back as failed
  // records carrying the parse error in `message`.
  std::vector<RunRecord> List() const;
  RunRecord Get(const std::string& run_id) const;
  void Put(RunRecord record) const;

  // Applies a status change, rejecting invalid transitions.
  RunRecord Transition(const std::string& run_id, RunStatus to,
                       const std::string& message = "") const;
  void SetProgress(const std::string& run_id, double progress,
                   const std::string& message = "") const;
  void AppendLog(const std::string& run_id, const std::string& line) const;

  // Marks training/retraining runs whose owning process is gone as failed.
  // Returns the number of runs recovered.
  int RecoverInterrupted() const;

  // Most recently created run id, if any.
  std::optional<std::string> Latest() const;

  // Per-run lock recording the pid of the process doing a mutation.
  void AcquireJobLock(const std::string& run_id) const;
  void ReleaseJobLock(const std::string& run_id) const;

 private:
  std::string root_;
};

// --- Workflow shared by the CLI and the HTTP service ---------------------

struct CreateRunOptions {
  std::string run_id;  // empty: derived from preset, seed and time
  std::string preset = "waterbirds";
  DatasetConfig dataset;
  ArchitectureConfig arch;
  TrainConfig train;
};

// Builds the dataset config from a preset name and seed.
CreateRunOptions DefaultRunOptions(const std::string& preset, uint64_t seed);

// Generates and stores the dataset; status idle.
RunRecord CreateRun(const RunStore& store, const CreateRunOptions& opts);

// idle -> training -> done; writes model_before and before-metrics.
RunRecord TrainRun(const RunStore& store, const std::string& run_id,
                   ProgressFn progress = {});

std::vector<ConceptInfo> ListConcepts(const RunStore& store,
                                      const std::string& run_id, int k = 10);

// Concepts the expert is shown (active, relied on by the head).
std::vector<int> PresentedConcepts(const ConceptBottleneck& model);

FeedbackSet SubmitFeedback(const RunStore& store, const std::string& run_id,
                           const std::set<int>& c_spur, FeedbackSource source);
FeedbackSet RunRuleOracle(const RunStore& store, const std::string& run_id,
                          double threshold = 0.5);
FeedbackSet RunLlmOracle(const RunStore& store, const std::string& run_id,
                         const std::string& task_description,
                         const LlmEndpointConfig& endpoint,
                         std::vector<std::string>* warnings = nullptr);

// Validates the request and moves the run to retraining. Throws
// ConflictError / PreconditionError. Split from ExecuteRetrain so the
// service can answer 202/409 before the job runs.
RunRecord BeginRetrain(const RunStore& store, const std::string& run_id,
                       const StrategyConfig& cfg);
// Runs the strategy and persists artifacts; ends in done or failed.
RunRecord ExecuteRetrain(const RunStore& store, const std::string& run_id,
                         ProgressFn progress = {});
RunRecord RetrainRun(const RunStore& store, const std::string& run_id,
                     const StrategyConfig& cfg, ProgressFn progress = {});

// Recomputes metrics.json (and metrics.csv) from the stored models.
RunMetrics EvaluateRun(const RunStore& store, const std::string& run_id);

Histogram WeightHistogram(const RunStore& store, const std::string& run_id,
                          int bins = 20);

}  // namespace cbdebug

#endif  // CBDEBUG_RUN_STORE_H_
