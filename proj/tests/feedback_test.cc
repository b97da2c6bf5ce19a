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

#include <map>
#include <numeric>
#include <mutex>
#include <thread>

#include "cbdebug/error.h"
#include "gtest/gtest.h"
#include "httplib.h"
#include "json.hpp"
#include "test_util.h"

namespace cbdebug {
namespace {

using nlohmann::json;

ConceptBottleneck SmallModel(const Dataset& ds) {
  TrainConfig cfg;
  cfg.epochs = 5;
  return Train(ds, nullptr, cfg);
}

TEST(HumanFeedback, RecordsVerdictsForPresentedAndMarked) {
  const Dataset ds = GenerateDataset(testing_util::SmallConfig());
  const ConceptBottleneck m = SmallModel(ds);
  const FeedbackSet fb = HumanFeedback(m, {3, 5}, {1, 3, 5, 7});
  EXPECT_EQ(fb.c_spur, (std::set<int>{3, 5}));
  EXPECT_EQ(fb.source, FeedbackSource::kHuman);
  EXPECT_EQ(fb.verdicts.at(1).verdict, Verdict::kNotSpurious);
  EXPECT_EQ(fb.verdicts.at(5).verdict, Verdict::kSpurious);
  EXPECT_FALSE(fb.created_at.empty());
  try {
    HumanFeedback(m, {3, 999}, {});
    FAIL();
  } catch (const UnknownConceptError& e) {
    EXPECT_EQ(e.id(), 999);
  }
}

TEST(LabelAux, ColumnsAreActivationsOfMarkedConcepts) {
  const Dataset ds = GenerateDataset(testing_util::SmallConfig());
  const ConceptBottleneck m = SmallModel(ds);
  FeedbackSet fb;
  fb.c_spur = {9, 4};
  const AuxLabels aux = LabelAux(m, ds, fb);
  EXPECT_EQ(aux.concept_order, (std::vector<int>{4, 9}));
  EXPECT_EQ(aux.sample_order, ds.TrainIndices());
  const Eigen::MatrixXd act = ConceptActivations(m, ds.features);
  for (size_t i = 0; i < aux.sample_order.size(); i += 37) {
    EXPECT_EQ(aux.v(i, 0), act(aux.sample_order[i], 4));
    EXPECT_EQ(aux.v(i, 1), act(aux.sample_order[i], 9));
  }
}

TEST(LabelAux, EmptyFeedbackIsAPreconditionFailure) {
  const Dataset ds = GenerateDataset(testing_util::SmallConfig());
  const ConceptBottleneck m = SmallModel(ds);
  try {
    LabelAux(m, ds, FeedbackSet{});
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_STREQ(e.what(), "c_spur is empty: nothing to debug");
  }
}

TEST(BackgroundShare, MeanAbsoluteAttributionRatio) {
  ConceptExplanation e;
  e.segment_attribution = {{1.0, -3.0, 0.0}, {-1.0, 1.0, 2.0}};
  const std::vector<SegmentRole> roles = {
      SegmentRole::kCore, SegmentRole::kBackground, SegmentRole::kBackground};
  // means |.|: 1, 2, 1 -> 3 / 4
  EXPECT_DOUBLE_EQ(BackgroundShare(e, roles), 0.75);
  EXPECT_EQ(BackgroundShare(ConceptExplanation{}, roles), 0.0);
}

TEST(RuleOracle, MarksBackgroundDominatedConcepts) {
  const Dataset ds = GenerateDataset(testing_util::SmallConfig());
  const ConceptBottleneck m = SmallModel(ds);
  std::vector<int> ids(m.n_concepts());
  std::iota(ids.begin(), ids.end(), 0);
  const auto expl = ExplainConcepts(m, ds, ids);
  const FeedbackSet fb = RuleOracle(m, ds, expl, 0.5);
  EXPECT_EQ(fb.source, FeedbackSource::kRuleOracle);
  for (const auto& e : expl) {
    const bool spurious = BackgroundShare(e, ds.segment_roles) > 0.5;
    EXPECT_EQ(fb.c_spur.count(e.concept_id) == 1, spurious);
  }
  // Concepts reading only background segments are always marked.
  for (const auto& meta : m.concept_meta) {
    bool all_bg = true;
    for (int s : meta.segments) {
      all_bg = all_bg && ds.segment_roles[s] == SegmentRole::kBackground;
    }
    if (all_bg) EXPECT_EQ(fb.c_spur.count(meta.id), 1u) << meta.name;
  }
  EXPECT_TRUE(RuleOracle(m, ds, expl, 1.0).c_spur.empty());
}

TEST(Prompts, BuiltInTemplateMatchesPromptFile) {
  EXPECT_EQ(SystemPromptTemplate(),
            LoadPromptFile(std::string(CBDEBUG_PROMPT_DIR) + "/system.txt"));
  for (const char* task : {"waterbirds", "metashift", "celeba"}) {
    EXPECT_EQ(TaskDescription(task),
              LoadPromptFile(std::string(CBDEBUG_PROMPT_DIR) + "/tasks/" +
                             task + ".txt"));
  }
  const std::string p = SystemPrompt(TaskDescription("waterbirds"));
  EXPECT_NE(p.find("The classification task is: distinguish between "
                   "WATERBIRDS and LANDBIRDS."),
            std::string::npos);
  EXPECT_EQ(p.find('{'), std::string::npos);
  EXPECT_THROW(TaskDescription("mnist"), ValidationError);
}

TEST(ParseVerdict, LeadingKeyword) {
  EXPECT_EQ(ParseVerdict("SPURIOUS. Water is background."), Verdict::kSpurious);
  EXPECT_EQ(ParseVerdict("  **Spurious** - scenery"), Verdict::kSpurious);
  EXPECT_EQ(ParseVerdict("NOT SPURIOUS: beak shape"), Verdict::kNotSpurious);
  EXPECT_EQ(ParseVerdict("not_spurious"), Verdict::kNotSpurious);
  EXPECT_EQ(ParseVerdict("I think it is spurious"), Verdict::kAbstain);
  EXPECT_EQ(ParseVerdict("SPURIOUSLY"), Verdict::kAbstain);
  EXPECT_EQ(ParseVerdict("NOT sure"), Verdict::kAbstain);
  EXPECT_EQ(ParseVerdict(""), Verdict::kAbstain);
}

// Scripted chat-completions endpoint: reply text keyed by concept name.
class StubLlm {
 public:
  explicit StubLlm(std::map<std::string, std::string> script)
      : script_(std::move(script)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      const json body = json::parse(req.body);
      const std::string name = body["messages"][1]["content"];
      {
        std::lock_guard<std::mutex> lock(mu_);
        requests_.push_back(body);
        auth_.push_back(req.get_header_value("Authorization"));
      }
      const std::string reply = script_.at(name);
      if (reply == "<500>") {
        res.status = 500;
        return;
      }
      if (reply == "<401>") {
        res.status = 401;
        return;
      }
      if (reply == "<not json>") {
        res.set_content("{oops", "application/json");
        return;
      }
      const json out = {
          {"choices", {{{"message", {{"role", "assistant"},
                                     {"content", reply}}}}}}};
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubLlm() {
    server_.stop();
    thread_.join();
  }

  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1";
  }
  std::vector<json> requests() {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
  }
  std::vector<std::string> auth() {
    std::lock_guard<std::mutex> lock(mu_);
    return auth_;
  }

 private:
  std::map<std::string, std::string> script_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::vector<json> requests_;
  std::vector<std::string> auth_;
};

TEST(LlmOracle, FollowsTheScriptAndAlwaysSendsTemperatureZero) {
  StubLlm stub({{"water background", "SPURIOUS. It is scenery."},
                {"beak", "NOT SPURIOUS - anatomy."},
                {"sky", "Spurious: co-occurs with the label."},
                {"feathers", "hmm, hard to say"},
                {"broken", "<not json>"}});
  LlmEndpointConfig ep;
  ep.base_url = stub.url();
  ep.api_key = "k-123";
  std::vector<std::string> warnings;
  const FeedbackSet fb = LlmOracle({{4, "water background"},
                                    {1, "beak"},
                                    {7, "sky"},
                                    {2, "feathers"},
                                    {9, "broken"}},
                                   TaskDescription("waterbirds"), ep,
                                   &warnings);
  EXPECT_EQ(fb.source, FeedbackSource::kLlmOracle);
  EXPECT_EQ(fb.c_spur, (std::set<int>{4, 7}));
  EXPECT_EQ(fb.verdicts.at(1).verdict, Verdict::kNotSpurious);
  EXPECT_EQ(fb.verdicts.at(2).verdict, Verdict::kAbstain);
  EXPECT_EQ(fb.verdicts.at(9).verdict, Verdict::kAbstain);
  EXPECT_EQ(fb.verdicts.at(2).justification, "hmm, hard to say");
  EXPECT_EQ(warnings.size(), 2u);

  const auto reqs = stub.requests();
  ASSERT_EQ(reqs.size(), 5u);
  for (const json& r : reqs) {
    ASSERT_TRUE(r.contains("temperature"));
    EXPECT_EQ(r["temperature"], 0);
    EXPECT_EQ(r["messages"][0]["role"], "system");
    EXPECT_EQ(r["messages"][0]["content"],
              SystemPrompt(TaskDescription("waterbirds")));
    EXPECT_EQ(r["messages"][1]["role"], "user");
  }
  // Deterministic order: ascending concept id.
  EXPECT_EQ(reqs[0]["messages"][1]["content"], "beak");
  for (const auto& a : stub.auth()) EXPECT_EQ(a, "Bearer k-123");
}

TEST(LlmOracle, TransportFailuresAreRetriable) {
  StubLlm stub({{"a", "SPURIOUS"}, {"b", "<500>"}, {"c", "<401>"}});
  LlmEndpointConfig ep;
  ep.base_url = stub.url();
  try {
    LlmOracle({{0, "a"}, {1, "b"}}, "task", ep);
    FAIL();
  } catch (const RetriableError& e) {
    EXPECT_EQ(e.concept_id(), 1);
  }
  EXPECT_THROW(LlmOracle({{2, "c"}}, "task", ep), Error);
  ep.base_url = "http://127.0.0.1:1";
  ep.timeout_seconds = 1;
  EXPECT_THROW(LlmOracle({{0, "a"}}, "task", ep), RetriableError);
  ep.base_url = "no-scheme";
  EXPECT_THROW(LlmOracle({{0, "a"}}, "task", ep), ConfigError);
  ep.base_url.clear();
  EXPECT_THROW(LlmOracle({{0, "a"}}, "task", ep), ConfigError);
}

}  // namespace
}  // namespace cbdebug
