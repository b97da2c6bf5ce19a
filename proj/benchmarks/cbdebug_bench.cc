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

// Microbenchmarks for the hot paths: weight estimation, training, inference
// and augmentation planning on the planted benchmark.

#include <benchmark/benchmark.h>

#include "cbdebug/augment.h"
#include "cbdebug/cbm.h"
#include "cbdebug/feedback.h"
#include "cbdebug/permweight.h"
#include "cbdebug/run_store.h"

namespace cbdebug {
namespace {

struct Fixture {
  Dataset ds;
  ConceptBottleneck model;
  FeedbackSet fb;
  AuxLabels aux;
  std::vector<int> y;
  std::vector<ConceptExplanation> explanations;
};

const Fixture& Planted() {
  static const Fixture f = [] {
    Fixture f;
    const CreateRunOptions o = DefaultRunOptions("waterbirds", 1);
    f.ds = GenerateDataset(o.dataset);
    f.model = Train(f.ds, nullptr, o.train, o.arch);
    f.explanations =
        ExplainConcepts(f.model, f.ds, RelevantConcepts(f.model));
    f.fb = RuleOracle(f.model, f.ds, f.explanations);
    f.aux = LabelAux(f.model, f.ds, f.fb);
    f.y = SelectItems(f.ds.labels, f.ds.TrainIndices());
    return f;
  }();
  return f;
}

void BM_ComputeWeights(benchmark::State& state) {
  const Fixture& f = Planted();
  PermWeightConfig cfg;
  cfg.n_permutations = static_cast<int>(state.range(0));
  cfg.seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ComputeWeights(f.aux, f.y, cfg));
  }
  state.SetItemsProcessed(state.iterations() * f.y.size());
}
BENCHMARK(BM_ComputeWeights)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  const Fixture& f = Planted();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Train(f.ds, nullptr, cfg));
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const Fixture& f = Planted();
  for (auto _ : state) {
    benchmark::DoNotOptimize(Predict(f.model, f.ds.features));
  }
  state.SetItemsProcessed(state.iterations() * f.ds.features.rows());
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMicrosecond);

void BM_BuildPlan(benchmark::State& state) {
  const Fixture& f = Planted();
  PermWeightConfig pw;
  pw.seed = 1;
  const SampleWeights w = ComputeWeights(f.aux, f.y, pw);
  AugmentConfig cfg;
  cfg.seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(BuildPlan(f.ds, f.model, w, f.fb, f.explanations, cfg));
  }
}
BENCHMARK(BM_BuildPlan)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace cbdebug

BENCHMARK_MAIN();
