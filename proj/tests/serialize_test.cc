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

#include <numeric>

#include "cbdebug/augment.h"
#include "cbdebug/error.h"
#include "cbdebug/eval.h"
#include "cbdebug/io.h"
#include "cbdebug/retrain.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace cbdebug {
namespace {

class SerializeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ds_ = new Dataset(GenerateDataset(testing_util::SmallConfig()));
    TrainConfig cfg;
    cfg.epochs = 4;
    const ConceptBottleneck model = Train(*ds_, nullptr, cfg);
    std::vector<int> ids(model.n_concepts());
    std::iota(ids.begin(), ids.end(), 0);
    fb_ = new FeedbackSet(
        RuleOracle(model, *ds_, ExplainConcepts(model, *ds_, ids)));
    StrategyConfig sc;
    sc.retrain_epochs = 1;
    result_ = new StrategyResult(RunStrategy(model, *ds_, fb_, sc));
    sc.strategy = Strategy::kProtoPDebug;
    forget_ = new ForgetSet(*RunStrategy(model, *ds_, fb_, sc)
                                 .artifacts.forget_set);
  }
  static void TearDownTestSuite() {
    delete ds_;
    delete fb_;
    delete result_;
    delete forget_;
  }

  testing_util::TempDir dir_;
  static Dataset* ds_;
  static FeedbackSet* fb_;
  static StrategyResult* result_;
  static ForgetSet* forget_;
};

Dataset* SerializeTest::ds_ = nullptr;
FeedbackSet* SerializeTest::fb_ = nullptr;
StrategyResult* SerializeTest::result_ = nullptr;
ForgetSet* SerializeTest::forget_ = nullptr;

TEST_F(SerializeTest, DatasetRoundTripIsExact) {
  SaveDataset(*ds_, dir_.File("d.json"));
  EXPECT_EQ(LoadDataset(dir_.File("d.json")), *ds_);
}

TEST_F(SerializeTest, ModelRoundTripIsExact) {
  const ConceptBottleneck& m = result_->model;
  SaveModel(m, dir_.File("m.json"));
  const ConceptBottleneck back = LoadModel(dir_.File("m.json"));
  EXPECT_EQ(back, m);
  // Bit-exact predictions after reload.
  EXPECT_EQ(Predict(back, ds_->features).scores, Predict(m, ds_->features).scores);
}

TEST_F(SerializeTest, FeedbackAuxWeightsPlanForgetSet) {
  SaveFeedback(*fb_, dir_.File("f.json"));
  EXPECT_EQ(LoadFeedback(dir_.File("f.json")), *fb_);
  SaveAux(*result_->artifacts.aux, dir_.File("a.json"));
  EXPECT_EQ(LoadAux(dir_.File("a.json")), *result_->artifacts.aux);
  SaveWeights(*result_->artifacts.weights, dir_.File("w.json"));
  EXPECT_EQ(LoadWeights(dir_.File("w.json")), *result_->artifacts.weights);
  SavePlan(*result_->artifacts.plan, dir_.File("p.json"));
  EXPECT_EQ(LoadPlan(dir_.File("p.json")), *result_->artifacts.plan);
  SaveForgetSet(*forget_, dir_.File("fs.json"));
  EXPECT_EQ(LoadForgetSet(dir_.File("fs.json")), *forget_);
}

TEST_F(SerializeTest, MetricsRoundTrip) {
  RunMetrics m;
  m.before = EvaluateModel(result_->artifacts.model_before, *ds_);
  SaveMetrics(m, dir_.File("m0.json"));
  RunMetrics back = LoadMetrics(dir_.File("m0.json"));
  EXPECT_EQ(back.before, m.before);
  EXPECT_FALSE(back.after);
  EXPECT_FALSE(back.concept_report);

  m.after = EvaluateModel(result_->model, *ds_);
  m.after->auroc.reset();
  m.concept_report =
      ComputeConceptReport(result_->artifacts.model_before, result_->model);
  SaveMetrics(m, dir_.File("m1.json"));
  back = LoadMetrics(dir_.File("m1.json"));
  EXPECT_EQ(back.after, m.after);
  ASSERT_TRUE(back.concept_report);
  ASSERT_EQ(back.concept_report->classes.size(), 2u);
  for (int k = 0; k < 2; ++k) {
    const auto& got = back.concept_report->classes[k];
    const auto& want = m.concept_report->classes[k];
    ASSERT_EQ(got.after.size(), want.after.size());
    for (size_t i = 0; i < got.after.size(); ++i) {
      EXPECT_EQ(got.after[i].concept_id, want.after[i].concept_id);
      EXPECT_EQ(got.after[i].weight, want.after[i].weight);
      EXPECT_EQ(got.after[i].changed, want.after[i].changed);
    }
  }
}

TEST_F(SerializeTest, TruncatedFileIsASchemaError) {
  SaveModel(result_->model, dir_.File("m.json"));
  const std::string text = ReadFile(dir_.File("m.json"));
  WriteFileAtomic(dir_.File("m.json"), text.substr(0, text.size() / 2));
  EXPECT_THROW(LoadModel(dir_.File("m.json")), SchemaError);
  WriteFileAtomic(dir_.File("m.json"), "");
  EXPECT_THROW(LoadModel(dir_.File("m.json")), SchemaError);
}

TEST_F(SerializeTest, VersionIsChecked) {
  SaveFeedback(*fb_, dir_.File("f.json"));
  std::string text = ReadFile(dir_.File("f.json"));
  const size_t at = text.find("\"version\"");
  ASSERT_NE(at, std::string::npos);
  WriteFileAtomic(dir_.File("f.json"),
                  "{\"version\": \"cbdebug.feedback/v999\"}");
  EXPECT_THROW(LoadFeedback(dir_.File("f.json")), VersionError);
  WriteFileAtomic(dir_.File("f.json"), "{\"c_spur\": []}");
  try {
    LoadFeedback(dir_.File("f.json"));
    FAIL() << "expected SchemaError";
  } catch (const VersionError&) {
    FAIL() << "a missing version is a schema error, not a version error";
  } catch (const SchemaError&) {
  }
}

TEST_F(SerializeTest, WrongShapesAreSchemaErrors) {
  SaveModel(result_->model, dir_.File("m.json"));
  std::string text = ReadFile(dir_.File("m.json"));
  // Wrong value type somewhere inside.
  const size_t at = text.find("\"active_mask\"");
  ASSERT_NE(at, std::string::npos);
  text.insert(text.find('[', at) + 1, "\"x\",");
  WriteFileAtomic(dir_.File("m.json"), text);
  EXPECT_THROW(LoadModel(dir_.File("m.json")), SchemaError);
  EXPECT_THROW(LoadModel(dir_.File("missing.json")), IoError);
}

}  // namespace
}  // namespace cbdebug
