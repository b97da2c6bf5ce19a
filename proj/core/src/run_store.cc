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

#include "cbdebug/run_store.h"

#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <regex>

#include "cbdebug/error.h"
#include "cbdebug/io.h"
#include "serialize.h"

namespace cbdebug {
namespace fs = std::filesystem;

namespace {

// Serializes read-modify-write cycles on run.json within this process.
// Cross-process exclusion is the job lock's business.
std::recursive_mutex& RecordMutex() {
  static std::recursive_mutex mu;
  return mu;
}

bool ValidRunId(const std::string& id) {
  static const std::regex re("[A-Za-z0-9][A-Za-z0-9._-]{0,95}");
  return std::regex_match(id, re);
}

bool ProcessAlive(long pid) {
  if (pid <= 0) return false;
  if (pid == static_cast<long>(getpid())) return true;
  return kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM;
}

bool Busy(RunStatus s) {
  return s == RunStatus::kTraining || s == RunStatus::kRetraining;
}

void RequireModel(const RunRecord& r) {
  if (r.model_before_ref.empty()) {
    throw PreconditionError("run " + r.run_id + " has no trained model");
  }
}

void RequireIdleForMutation(const RunRecord& r) {
  if (Busy(r.status)) {
    throw ConflictError("run " + r.run_id + " is " + RunStatusName(r.status));
  }
}

}  // namespace

const char* RunStatusName(RunStatus s) {
  switch (s) {
    case RunStatus::kIdle: return "idle";
    case RunStatus::kTraining: return "training";
    case RunStatus::kRetraining: return "retraining";
    case RunStatus::kDone: return "done";
    case RunStatus::kFailed: return "failed";
  }
  return "?";
}

RunStatus ParseRunStatus(const std::string& s) {
  for (RunStatus r : {RunStatus::kIdle, RunStatus::kTraining,
                      RunStatus::kRetraining, RunStatus::kDone,
                      RunStatus::kFailed}) {
    if (s == RunStatusName(r)) return r;
  }
  throw SchemaError("unknown run status '" + s + "'");
}

bool IsValidTransition(RunStatus from, RunStatus to) {
  switch (from) {
    case RunStatus::kIdle: return to == RunStatus::kTraining;
    case RunStatus::kTraining:
      return to == RunStatus::kDone || to == RunStatus::kFailed;
    case RunStatus::kDone: return to == RunStatus::kRetraining;
    case RunStatus::kRetraining:
      return to == RunStatus::kDone || to == RunStatus::kFailed;
    case RunStatus::kFailed: return to == RunStatus::kRetraining;
  }
  return false;
}

// --- RunStore --------------------------------------------------------------

RunStore::RunStore(std::string root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec || !fs::is_directory(root_)) {
    throw IoError("cannot create runs directory " + root_ + ": " +
                  ec.message());
  }
}

std::string RunStore::RunDir(const std::string& run_id) const {
  if (!ValidRunId(run_id)) throw NotFoundError("invalid run id '" + run_id + "'");
  return (fs::path(root_) / run_id).string();
}

std::string RunStore::Path(const std::string& run_id,
                           const std::string& file) const {
  return (fs::path(RunDir(run_id)) / file).string();
}

bool RunStore::Exists(const std::string& run_id) const {
  return ValidRunId(run_id) && FileExists(Path(run_id, files::kRun));
}

RunRecord RunStore::Get(const std::string& run_id) const {
  if (!Exists(run_id)) throw NotFoundError("no such run '" + run_id + "'");
  const std::string path = Path(run_id, files::kRun);
  const auto j = serial::LoadVersioned(path, serial::kRunVersion);
  try {
    return serial::RunRecordFromJson(j);
  } catch (const serial::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

std::vector<RunRecord> RunStore::List() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_)) {
    const std::string id = entry.path().filename().string();
    if (entry.is_directory() && ValidRunId(id)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  std::vector<RunRecord> out;
  for (const auto& id : ids) {
    try {
      out.push_back(Get(id));
    } catch (const Error& e) {
      // Corrupt or half-created directory: surface it, don't die on it.
      RunRecord r;
      r.run_id = id;
      r.status = RunStatus::kFailed;
      r.message = e.what();
      out.push_back(std::move(r));
    }
  }
  return out;
}

void RunStore::Put(RunRecord record) const {
  std::lock_guard<std::recursive_mutex> lock(RecordMutex());
  std::error_code ec;
  fs::create_directories(RunDir(record.run_id), ec);
  if (record.created_at.empty()) record.created_at = NowIso8601();
  record.updated_at = NowIso8601();
  serial::SaveJson(Path(record.run_id, files::kRun), serial::ToJson(record), 2);
}

RunRecord RunStore::Transition(const std::string& run_id, RunStatus to,
                               const std::string& message) const {
  std::lock_guard<std::recursive_mutex> lock(RecordMutex());
  RunRecord r = Get(run_id);
  if (!IsValidTransition(r.status, to)) {
    const std::string what = std::string("cannot move run ") + run_id +
                             " from " + RunStatusName(r.status) + " to " +
                             RunStatusName(to);
    if (Busy(r.status)) throw ConflictError(what);
    throw PreconditionError(what);
  }
  r.status = to;
  r.message = message;
  if (Busy(to)) r.progress = 0.0;
  if (to == RunStatus::kDone) r.progress = 1.0;
  Put(r);
  return r;
}

void RunStore::SetProgress(const std::string& run_id, double progress,
                           const std::string& message) const {
  std::lock_guard<std::recursive_mutex> lock(RecordMutex());
  RunRecord r = Get(run_id);
  r.progress = std::clamp(progress, 0.0, 1.0);
  if (!message.empty()) r.message = message;
  Put(r);
}

void RunStore::AppendLog(const std::string& run_id,
                         const std::string& line) const {
  std::lock_guard<std::recursive_mutex> lock(RecordMutex());
  std::ofstream out(Path(run_id, files::kLog), std::ios::app);
  out << NowIso8601() << " " << line << "\n";
}

void RunStore::AcquireJobLock(const std::string& run_id) const {
  std::lock_guard<std::recursive_mutex> lock(RecordMutex());
  const std::string path = Path(run_id, files::kLock);
  if (FileExists(path)) {
    long pid = 0;
    try {
      pid = std::stol(ReadFile(path));
    } catch (const std::exception&) {
    }
    if (pid != static_cast<long>(getpid()) && ProcessAlive(pid)) {
      throw ConflictError("run " + run_id + " is locked by process " +
                          std::to_string(pid));
    }
  }
  WriteFileAtomic(path, std::to_string(getpid()) + "\n");
}

void RunStore::ReleaseJobLock(const std::string& run_id) const {
  std::error_code ec;
  fs::remove(Path(run_id, files::kLock), ec);
}

int RunStore::RecoverInterrupted() const {
  std::lock_guard<std::recursive_mutex> lock(RecordMutex());
  int recovered = 0;
  for (const RunRecord& listed : List()) {
    if (!Busy(listed.status)) continue;
    const std::string lock_path = Path(listed.run_id, files::kLock);
    long pid = 0;
    if (FileExists(lock_path)) {
      try {
        pid = std::stol(ReadFile(lock_path));
      } catch (const std::exception&) {
      }
    }
    // Our own pid only counts if this process actually owns a job; a
    // restarted service reusing a dead job's pid is vanishingly unlikely.
    if (pid != 0 && pid != static_cast<long>(getpid()) && ProcessAlive(pid)) {
      continue;
    }
    if (pid == static_cast<long>(getpid())) continue;
    Transition(listed.run_id, RunStatus::kFailed,
               std::string("interrupted while ") +
                   RunStatusName(listed.status));
    AppendLog(listed.run_id, "job interrupted; marked failed on restart");
    ReleaseJobLock(listed.run_id);
    ++recovered;
  }
  return recovered;
}

std::optional<std::string> RunStore::Latest() const {
  std::optional<RunRecord> best;
  for (const RunRecord& r : List()) {
    if (r.created_at.empty()) continue;
    if (!best || std::tie(r.created_at, r.run_id) >
                     std::tie(best->created_at, best->run_id)) {
      best = r;
    }
  }
  if (!best) return std::nullopt;
  return best->run_id;
}

// --- workflow --------------------------------------------------------------

CreateRunOptions DefaultRunOptions(const std::string& preset, uint64_t seed) {
  CreateRunOptions o;
  o.preset = preset;
  o.dataset = PresetConfig(preset, seed);
  o.train.seed = seed;
  return o;
}

RunRecord CreateRun(const RunStore& store, const CreateRunOptions& opts) {
  opts.dataset.Validate();
  opts.train.Validate();
  if (opts.arch.window_width < 1 ||
      opts.arch.window_width > opts.dataset.segments) {
    throw ConfigError("arch.window_width",
                      "must be in [1, segments]");
  }
  if (opts.arch.concepts_per_window < 1) {
    throw ConfigError("arch.concepts_per_window", "must be >= 1");
  }
  std::string id = opts.run_id;
  if (id.empty()) {
    std::string stamp = NowIso8601();
    stamp.erase(std::remove_if(stamp.begin(), stamp.end(),
                               [](char c) { return c == '-' || c == ':'; }),
                stamp.end());
    stamp = stamp.substr(0, 15);  // YYYYMMDDTHHMMSS
    const std::string base = opts.preset + "-s" +
                             std::to_string(opts.dataset.seed) + "-" + stamp;
    id = base;
    for (int i = 2; store.Exists(id) || fs::exists(fs::path(store.root()) / id);
         ++i) {
      id = base + "-" + std::to_string(i);
    }
  }
  if (!ValidRunId(id)) {
    throw ConfigError("run_id", "must match [A-Za-z0-9][A-Za-z0-9._-]*");
  }
  if (store.Exists(id)) throw ConflictError("run '" + id + "' already exists");

  const Dataset ds = GenerateDataset(opts.dataset);
  std::error_code ec;
  fs::create_directories(store.RunDir(id), ec);
  SaveDataset(ds, store.Path(id, files::kDataset));

  RunRecord r;
  r.run_id = id;
  r.preset = opts.preset;
  r.dataset_ref = files::kDataset;
  r.arch = opts.arch;
  r.train_config = opts.train;
  r.created_at = NowIso8601();
  store.Put(r);
  store.AppendLog(id, "created; " + std::to_string(ds.size()) + " samples");
  return store.Get(id);
}

namespace {

RunMetrics ComputeRunMetrics(const RunStore& store, const RunRecord& r,
                             const Dataset& ds) {
  RunMetrics m;
  const ConceptBottleneck before =
      LoadModel(store.Path(r.run_id, r.model_before_ref));
  m.before = EvaluateModel(before, ds);
  if (!r.model_after_ref.empty()) {
    const ConceptBottleneck after =
        LoadModel(store.Path(r.run_id, r.model_after_ref));
    m.after = EvaluateModel(after, ds);
    m.concept_report = ComputeConceptReport(before, after);
  }
  return m;
}

void WriteMetrics(const RunStore& store, RunRecord& r, const RunMetrics& m) {
  SaveMetrics(m, store.Path(r.run_id, files::kMetrics));
  WriteFileAtomic(store.Path(r.run_id, files::kMetricsCsv),
                  MetricsCsv(r.run_id, m));
  r.metrics_ref = files::kMetrics;
}

// Runs `body` as a job: on any exception the run ends failed and the lock
// is dropped before rethrowing.
template <class F>
RunRecord RunJob(const RunStore& store, const std::string& run_id, F&& body) {
  try {
    RunRecord r = body();
    store.ReleaseJobLock(run_id);
    return r;
  } catch (const std::exception& e) {
    try {
      store.AppendLog(run_id, std::string("failed: ") + e.what());
      store.Transition(run_id, RunStatus::kFailed, e.what());
    } catch (const std::exception&) {
    }
    store.ReleaseJobLock(run_id);
    throw;
  }
}

ProgressFn StoreProgress(const RunStore& store, const std::string& run_id,
                         ProgressFn user) {
  return [&store, run_id, user = std::move(user)](double p) {
    store.SetProgress(run_id, p);
    if (user) user(p);
  };
}

}  // namespace

RunRecord TrainRun(const RunStore& store, const std::string& run_id,
                   ProgressFn progress) {
  {
    std::lock_guard<std::recursive_mutex> lock(RecordMutex());
    const RunRecord r = store.Get(run_id);
    if (Busy(r.status)) {
      throw ConflictError("run " + run_id + " is " + RunStatusName(r.status));
    }
    if (r.status != RunStatus::kIdle) {
      throw PreconditionError("run " + run_id + " is already trained");
    }
    store.AcquireJobLock(run_id);
    try {
      store.Transition(run_id, RunStatus::kTraining, "training");
    } catch (...) {
      store.ReleaseJobLock(run_id);
      throw;
    }
  }
  return RunJob(store, run_id, [&] {
    RunRecord r = store.Get(run_id);
    const Dataset ds = LoadDataset(store.Path(run_id, r.dataset_ref));
    store.AppendLog(run_id, "training " +
                                std::to_string(r.train_config.epochs) +
                                " epochs");
    ConceptBottleneck model =
        Train(ds, nullptr, r.train_config, r.arch,
              StoreProgress(store, run_id, progress));
    model.parent_run = run_id;
    SaveModel(model, store.Path(run_id, files::kModelBefore));

    std::lock_guard<std::recursive_mutex> lock(RecordMutex());
    r = store.Get(run_id);
    r.model_before_ref = files::kModelBefore;
    RunMetrics m;
    m.before = EvaluateModel(model, ds);
    WriteMetrics(store, r, m);
    store.Put(r);
    store.AppendLog(run_id, "trained; test worst-group " +
                                std::to_string(m.before.worst_group));
    return store.Transition(run_id, RunStatus::kDone, "trained");
  });
}

std::vector<int> PresentedConcepts(const ConceptBottleneck& model) {
  return RelevantConcepts(model);
}

std::vector<ConceptInfo> ListConcepts(const RunStore& store,
                                      const std::string& run_id, int k) {
  const RunRecord r = store.Get(run_id);
  RequireModel(r);
  const Dataset ds = LoadDataset(store.Path(run_id, r.dataset_ref));
  const ConceptBottleneck model = LoadModel(store.Path(
      run_id, r.model_after_ref.empty() ? r.model_before_ref
                                        : r.model_after_ref));
  std::vector<int> ids(model.n_concepts());
  for (int c = 0; c < model.n_concepts(); ++c) ids[c] = c;
  const auto expl = ExplainConcepts(model, ds, ids, k);
  std::vector<ConceptInfo> out;
  for (int c = 0; c < model.n_concepts(); ++c) {
    ConceptInfo info;
    info.concept_id = c;
    info.name = model.concept_meta[c].name;
    const Eigen::VectorXd col = model.head_weights.col(c);
    info.head_weights.assign(col.data(), col.data() + col.size());
    info.active = model.active_mask[c];
    info.explanation = expl[c];
    out.push_back(std::move(info));
  }
  return out;
}

namespace {

struct FeedbackContext {
  RunRecord record;
  ConceptBottleneck model;
};

FeedbackContext LoadForFeedback(const RunStore& store,
                                const std::string& run_id) {
  FeedbackContext ctx{store.Get(run_id), {}};
  RequireIdleForMutation(ctx.record);
  RequireModel(ctx.record);
  ctx.model = LoadModel(store.Path(run_id, ctx.record.model_before_ref));
  return ctx;
}

FeedbackSet StoreFeedback(const RunStore& store, const std::string& run_id,
                          const FeedbackSet& fb) {
  std::lock_guard<std::recursive_mutex> lock(RecordMutex());
  RunRecord r = store.Get(run_id);
  RequireIdleForMutation(r);
  SaveFeedback(fb, store.Path(run_id, files::kFeedback));
  r.feedback_ref = files::kFeedback;
  store.Put(r);
  std::string ids;
  for (int c : fb.c_spur) ids += (ids.empty() ? "" : ",") + std::to_string(c);
  store.AppendLog(run_id, std::string("feedback from ") +
                              FeedbackSourceName(fb.source) + ": {" + ids +
                              "}");
  return fb;
}

}  // namespace

FeedbackSet SubmitFeedback(const RunStore& store, const std::string& run_id,
                           const std::set<int>& c_spur, FeedbackSource source) {
  const FeedbackContext ctx = LoadForFeedback(store, run_id);
  FeedbackSet fb =
      HumanFeedback(ctx.model, c_spur, PresentedConcepts(ctx.model));
  fb.source = source;
  return StoreFeedback(store, run_id, fb);
}

FeedbackSet RunRuleOracle(const RunStore& store, const std::string& run_id,
                          double threshold) {
  const FeedbackContext ctx = LoadForFeedback(store, run_id);
  const Dataset ds = LoadDataset(store.Path(run_id, ctx.record.dataset_ref));
  const auto expl =
      ExplainConcepts(ctx.model, ds, PresentedConcepts(ctx.model));
  return StoreFeedback(store, run_id,
                       RuleOracle(ctx.model, ds, expl, threshold));
}

FeedbackSet RunLlmOracle(const RunStore& store, const std::string& run_id,
                         const std::string& task_description,
                         const LlmEndpointConfig& endpoint,
                         std::vector<std::string>* warnings) {
  const FeedbackContext ctx = LoadForFeedback(store, run_id);
  std::vector<NamedConcept> concepts;
  for (int c : PresentedConcepts(ctx.model)) {
    concepts.push_back({c, ctx.model.concept_meta[c].name});
  }
  std::vector<std::string> local;
  FeedbackSet fb = LlmOracle(concepts, task_description, endpoint, &local);
  for (const auto& w : local) store.AppendLog(run_id, "llm oracle: " + w);
  if (warnings != nullptr) {
    warnings->insert(warnings->end(), local.begin(), local.end());
  }
  return StoreFeedback(store, run_id, fb);
}

RunRecord BeginRetrain(const RunStore& store, const std::string& run_id,
                       const StrategyConfig& cfg) {
  std::lock_guard<std::recursive_mutex> lock(RecordMutex());
  RunRecord r = store.Get(run_id);
  if (Busy(r.status)) {
    throw ConflictError("retrain already running for run " + run_id);
  }
  RequireModel(r);
  cfg.Validate();
  if (UsesFeedback(cfg.strategy) && r.feedback_ref.empty()) {
    throw PreconditionError("no feedback recorded");
  }
  if (UsesFeedback(cfg.strategy) && cfg.strategy != Strategy::kRetrain) {
    const FeedbackSet fb = LoadFeedback(store.Path(run_id, r.feedback_ref));
    if (fb.c_spur.empty()) {
      throw PreconditionError("c_spur is empty: nothing to debug");
    }
  }
  store.AcquireJobLock(run_id);
  try {
    r.strategy = cfg;
    store.Put(r);
    return store.Transition(run_id, RunStatus::kRetraining,
                            std::string("retraining with ") +
                                StrategyName(cfg.strategy));
  } catch (...) {
    store.ReleaseJobLock(run_id);
    throw;
  }
}

RunRecord ExecuteRetrain(const RunStore& store, const std::string& run_id,
                         ProgressFn progress) {
  return RunJob(store, run_id, [&] {
    RunRecord r = store.Get(run_id);
    if (r.status != RunStatus::kRetraining || !r.strategy) {
      throw PreconditionError("run " + run_id + " is not queued for retraining");
    }
    const StrategyConfig cfg = *r.strategy;
    const Dataset ds = LoadDataset(store.Path(run_id, r.dataset_ref));
    const ConceptBottleneck before =
        LoadModel(store.Path(run_id, r.model_before_ref));
    std::optional<FeedbackSet> fb;
    if (UsesFeedback(cfg.strategy)) {
      fb = LoadFeedback(store.Path(run_id, r.feedback_ref));
    }
    // Artifacts of an earlier retrain must not outlive it.
    for (const char* f : {files::kModelAfter, files::kAux, files::kWeights,
                          files::kPlan, files::kForgetSet}) {
      std::error_code ec;
      fs::remove(store.Path(run_id, f), ec);
    }
    if (!r.model_after_ref.empty()) {
      std::lock_guard<std::recursive_mutex> lock(RecordMutex());
      RunRecord cur = store.Get(run_id);
      cur.model_after_ref.clear();
      store.Put(cur);
    }
    store.AppendLog(run_id, std::string("retraining: ") +
                                StrategyName(cfg.strategy));

    StrategyResult res =
        RunStrategy(before, ds, fb ? &*fb : nullptr, cfg,
                    StoreProgress(store, run_id, progress));
    for (const auto& line : res.artifacts.log) store.AppendLog(run_id, line);
    const RunArtifacts& art = res.artifacts;
    if (art.aux) SaveAux(*art.aux, store.Path(run_id, files::kAux));
    if (art.weights) {
      SaveWeights(*art.weights, store.Path(run_id, files::kWeights));
    }
    if (art.plan) SavePlan(*art.plan, store.Path(run_id, files::kPlan));
    if (art.forget_set) {
      SaveForgetSet(*art.forget_set, store.Path(run_id, files::kForgetSet));
    }
    res.model.parent_run = run_id;
    SaveModel(res.model, store.Path(run_id, files::kModelAfter));

    std::lock_guard<std::recursive_mutex> lock(RecordMutex());
    r = store.Get(run_id);
    r.model_after_ref = files::kModelAfter;
    const RunMetrics m = ComputeRunMetrics(store, r, ds);
    WriteMetrics(store, r, m);
    store.Put(r);
    store.AppendLog(run_id, "retrained; test worst-group " +
                                std::to_string(m.before.worst_group) + " -> " +
                                std::to_string(m.after->worst_group));
    return store.Transition(run_id, RunStatus::kDone, "retrained");
  });
}

RunRecord RetrainRun(const RunStore& store, const std::string& run_id,
                     const StrategyConfig& cfg, ProgressFn progress) {
  BeginRetrain(store, run_id, cfg);
  return ExecuteRetrain(store, run_id, std::move(progress));
}

RunMetrics EvaluateRun(const RunStore& store, const std::string& run_id) {
  std::lock_guard<std::recursive_mutex> lock(RecordMutex());
  RunRecord r = store.Get(run_id);
  RequireIdleForMutation(r);
  RequireModel(r);
  const Dataset ds = LoadDataset(store.Path(run_id, r.dataset_ref));
  const RunMetrics m = ComputeRunMetrics(store, r, ds);
  WriteMetrics(store, r, m);
  store.Put(r);
  return m;
}

Histogram WeightHistogram(const RunStore& store, const std::string& run_id,
                          int bins) {
  const RunRecord r = store.Get(run_id);
  const std::string path = store.Path(run_id, files::kWeights);
  if (r.status == RunStatus::kRetraining || !FileExists(path)) {
    throw NotFoundError("run " + run_id + " has no sample weights");
  }
  if (bins < 1) throw ConfigError("bins", "must be >= 1");
  return MakeHistogram(LoadWeights(path).u, bins);
}

}  // namespace cbdebug
