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
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include "cbdebug/io.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace cbdebug {
namespace {

namespace fs = std::filesystem;

CreateRunOptions SmallRun(const std::string& id) {
  CreateRunOptions o = DefaultRunOptions("waterbirds", 7);
  o.run_id = id;
  o.dataset = testing_util::SmallConfig();
  o.train.epochs = 4;
  return o;
}

StrategyConfig Quick(Strategy s) {
  StrategyConfig c;
  c.strategy = s;
  c.retrain_epochs = 1;
  return c;
}

class RunStoreTest : public ::testing::Test {
 protected:
  testing_util::TempDir dir_;
  RunStore store_{dir_.File("runs")};
};

TEST(RunStatus, TransitionTable) {
  using S = RunStatus;
  EXPECT_TRUE(IsValidTransition(S::kIdle, S::kTraining));
  EXPECT_TRUE(IsValidTransition(S::kTraining, S::kDone));
  EXPECT_TRUE(IsValidTransition(S::kTraining, S::kFailed));
  EXPECT_TRUE(IsValidTransition(S::kDone, S::kRetraining));
  EXPECT_TRUE(IsValidTransition(S::kRetraining, S::kDone));
  EXPECT_TRUE(IsValidTransition(S::kRetraining, S::kFailed));
  EXPECT_TRUE(IsValidTransition(S::kFailed, S::kRetraining));
  EXPECT_FALSE(IsValidTransition(S::kIdle, S::kDone));
  EXPECT_FALSE(IsValidTransition(S::kDone, S::kTraining));
  EXPECT_FALSE(IsValidTransition(S::kTraining, S::kRetraining));
  EXPECT_FALSE(IsValidTransition(S::kFailed, S::kDone));
  for (S s : {S::kIdle, S::kTraining, S::kRetraining, S::kDone, S::kFailed}) {
    EXPECT_EQ(ParseRunStatus(RunStatusName(s)), s);
  }
}

TEST_F(RunStoreTest, EmptyStore) {
  EXPECT_TRUE(store_.List().empty());
  EXPECT_FALSE(store_.Latest());
  EXPECT_THROW(store_.Get("nope"), NotFoundError);
  EXPECT_THROW(store_.Get("../etc"), NotFoundError);
}

TEST_F(RunStoreTest, CreateTrainRetrainLifecycle) {
  RunRecord r = CreateRun(store_, SmallRun("r1"));
  EXPECT_EQ(r.status, RunStatus::kIdle);
  EXPECT_EQ(r.created_at.size(), 24u);
  EXPECT_TRUE(FileExists(store_.Path("r1", files::kDataset)));
  EXPECT_THROW(CreateRun(store_, SmallRun("r1")), ConflictError);
  EXPECT_EQ(store_.Latest(), "r1");

  std::vector<double> progress;
  r = TrainRun(store_, "r1", [&](double p) { progress.push_back(p); });
  EXPECT_EQ(r.status, RunStatus::kDone);
  EXPECT_EQ(r.model_before_ref, files::kModelBefore);
  EXPECT_EQ(progress.back(), 1.0);
  EXPECT_EQ(LoadMetrics(store_.Path("r1", files::kMetrics)).before.n.size(),
            4u);
  EXPECT_FALSE(FileExists(store_.Path("r1", files::kLock)));
  EXPECT_THROW(TrainRun(store_, "r1"), PreconditionError);

  // No feedback yet.
  try {
    RetrainRun(store_, "r1", Quick(Strategy::kCbDebug));
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_STREQ(e.what(), "no feedback recorded");
  }
  EXPECT_EQ(store_.Get("r1").status, RunStatus::kDone);

  const FeedbackSet fb = RunRuleOracle(store_, "r1");
  ASSERT_FALSE(fb.c_spur.empty());
  EXPECT_EQ(store_.Get("r1").feedback_ref, files::kFeedback);
  r = RetrainRun(store_, "r1", Quick(Strategy::kCbDebug));
  EXPECT_EQ(r.status, RunStatus::kDone);
  for (const char* f : {files::kModelAfter, files::kAux, files::kWeights,
                        files::kPlan, files::kMetricsCsv, files::kLog}) {
    EXPECT_TRUE(FileExists(store_.Path("r1", f))) << f;
  }
  const RunMetrics m = LoadMetrics(store_.Path("r1", files::kMetrics));
  ASSERT_TRUE(m.after);
  ASSERT_TRUE(m.concept_report);
  EXPECT_EQ(WeightHistogram(store_, "r1", 10).counts.size(), 10u);

  // A second retrain replaces the artifacts of the first.
  r = RetrainRun(store_, "r1", Quick(Strategy::kRetrain));
  EXPECT_FALSE(FileExists(store_.Path("r1", files::kWeights)));
  EXPECT_THROW(WeightHistogram(store_, "r1"), NotFoundError);
  EXPECT_EQ(r.strategy->strategy, Strategy::kRetrain);

  // Concepts reflect the retrained model.
  const auto concepts = ListConcepts(store_, "r1", 3);
  for (int c : fb.c_spur) EXPECT_FALSE(concepts[c].active);
  EXPECT_EQ(concepts[0].explanation.top_exemplars.size(), 3u);
}

TEST_F(RunStoreTest, HumanFeedbackValidatesIds) {
  CreateRun(store_, SmallRun("r1"));
  EXPECT_THROW(SubmitFeedback(store_, "r1", {1}, FeedbackSource::kHuman),
               PreconditionError);
  TrainRun(store_, "r1");
  EXPECT_THROW(SubmitFeedback(store_, "r1", {999}, FeedbackSource::kHuman),
               UnknownConceptError);
  SubmitFeedback(store_, "r1", {}, FeedbackSource::kHuman);
  try {
    RetrainRun(store_, "r1", Quick(Strategy::kCbDebug));
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("c_spur is empty"), std::string::npos);
  }
}

TEST_F(RunStoreTest, BusyRunsConflict) {
  CreateRun(store_, SmallRun("r1"));
  TrainRun(store_, "r1");
  RunRuleOracle(store_, "r1");
  BeginRetrain(store_, "r1", Quick(Strategy::kRetrain));
  EXPECT_EQ(store_.Get("r1").status, RunStatus::kRetraining);
  EXPECT_THROW(BeginRetrain(store_, "r1", Quick(Strategy::kRetrain)),
               ConflictError);
  EXPECT_THROW(RunRuleOracle(store_, "r1"), ConflictError);
  EXPECT_THROW(EvaluateRun(store_, "r1"), ConflictError);
  EXPECT_THROW(store_.Transition("r1", RunStatus::kTraining), ConflictError);
  EXPECT_EQ(ExecuteRetrain(store_, "r1").status, RunStatus::kDone);
  EXPECT_THROW(store_.Transition("r1", RunStatus::kTraining),
               PreconditionError);
}

TEST_F(RunStoreTest, GeneratedIdsAreUnique) {
  CreateRunOptions o = SmallRun("");
  const std::string a = CreateRun(store_, o).run_id;
  const std::string b = CreateRun(store_, o).run_id;
  EXPECT_NE(a, b);
  EXPECT_EQ(a.rfind("waterbirds-s7-", 0), 0u);
  o.run_id = "bad id";
  EXPECT_THROW(CreateRun(store_, o), ConfigError);
}

TEST_F(RunStoreTest, CorruptRunIsListedAsFailed) {
  CreateRun(store_, SmallRun("good"));
  fs::create_directories(store_.RunDir("broken"));
  WriteFileAtomic(store_.Path("broken", files::kRun), "{\"version\":");
  const auto runs = store_.List();
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].run_id, "broken");
  EXPECT_EQ(runs[0].status, RunStatus::kFailed);
  EXPECT_FALSE(runs[0].message.empty());
  EXPECT_THROW(store_.Get("broken"), SchemaError);
}

TEST_F(RunStoreTest, LockHeldByLiveProcessConflicts) {
  CreateRun(store_, SmallRun("r1"));
  // pid 1 is always alive.
  WriteFileAtomic(store_.Path("r1", files::kLock), "1\n");
  EXPECT_THROW(store_.AcquireJobLock("r1"), ConflictError);
  store_.ReleaseJobLock("r1");
  store_.AcquireJobLock("r1");
  EXPECT_EQ(std::stol(ReadFile(store_.Path("r1", files::kLock))), getpid());
  store_.ReleaseJobLock("r1");
}

// Forks a child that runs `job` and parks it once the run reports progress,
// then SIGKILLs it.
template <class Job>
void KillMidJob(const RunStore& store, const std::string& run_id, Job job) {
  int fds[2];
  ASSERT_EQ(pipe(fds), 0);
  const pid_t pid = fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    close(fds[0]);
    bool signalled = false;
    try {
      job([&](double) {
        if (!signalled) {
          signalled = true;
          (void)!write(fds[1], "x", 1);
          for (;;) pause();
        }
      });
    } catch (...) {
    }
    _exit(3);
  }
  close(fds[1]);
  char c = 0;
  ASSERT_EQ(read(fds[0], &c, 1), 1);
  close(fds[0]);
  const RunStatus mid = store.Get(run_id).status;
  EXPECT_TRUE(mid == RunStatus::kTraining || mid == RunStatus::kRetraining);
  ASSERT_EQ(kill(pid, SIGKILL), 0);
  int status = 0;
  ASSERT_EQ(waitpid(pid, &status, 0), pid);
  ASSERT_TRUE(WIFSIGNALED(status));
}

TEST_F(RunStoreTest, CrashDuringTrainingIsRecoveredAsFailed) {
  CreateRun(store_, SmallRun("r1"));
  KillMidJob(store_, "r1", [&](ProgressFn p) { TrainRun(store_, "r1", p); });
  EXPECT_EQ(store_.Get("r1").status, RunStatus::kTraining);
  EXPECT_EQ(store_.RecoverInterrupted(), 1);
  const RunRecord r = store_.Get("r1");
  EXPECT_EQ(r.status, RunStatus::kFailed);
  EXPECT_NE(r.message.find("interrupted"), std::string::npos);
  EXPECT_FALSE(FileExists(store_.Path("r1", files::kLock)));
  EXPECT_EQ(store_.RecoverInterrupted(), 0);
  // Nothing was trained, so there is nothing to retrain from.
  EXPECT_THROW(RetrainRun(store_, "r1", Quick(Strategy::kRetrain)),
               PreconditionError);
}

TEST_F(RunStoreTest, CrashDuringRetrainKeepsModelBefore) {
  CreateRun(store_, SmallRun("r1"));
  TrainRun(store_, "r1");
  RunRuleOracle(store_, "r1");
  const ConceptBottleneck before =
      LoadModel(store_.Path("r1", files::kModelBefore));
  KillMidJob(store_, "r1", [&](ProgressFn p) {
    RetrainRun(store_, "r1", Quick(Strategy::kCbDebug), p);
  });
  EXPECT_EQ(store_.RecoverInterrupted(), 1);
  EXPECT_EQ(store_.Get("r1").status, RunStatus::kFailed);
  EXPECT_EQ(LoadModel(store_.Path("r1", files::kModelBefore)), before);
  // No torn files: every artifact present parses.
  for (const auto& entry : fs::directory_iterator(store_.RunDir("r1"))) {
    EXPECT_EQ(entry.path().filename().string().find(".tmp"), std::string::npos);
  }
  // failed -> retraining -> done.
  EXPECT_EQ(RetrainRun(store_, "r1", Quick(Strategy::kCbDebug)).status,
            RunStatus::kDone);
}

TEST_F(RunStoreTest, EvaluateRewritesMetrics) {
  CreateRun(store_, SmallRun("r1"));
  TrainRun(store_, "r1");
  fs::remove(store_.Path("r1", files::kMetrics));
  const RunMetrics m = EvaluateRun(store_, "r1");
  EXPECT_EQ(LoadMetrics(store_.Path("r1", files::kMetrics)).before, m.before);
  EXPECT_EQ(ReadFile(store_.Path("r1", files::kMetricsCsv)),
            MetricsCsv("r1", m));
}

}  // namespace
}  // namespace cbdebug
