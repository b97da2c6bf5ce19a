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

#include "cbdebug/augment.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "cbdebug/error.h"
#include "cbdebug/random.h"

namespace cbdebug {

const char* AugmentModeName(AugmentMode m) {
  return m == AugmentMode::kCutMix ? "cutmix" : "mixup";
}

AugmentMode ParseAugmentMode(const std::string& s) {
  if (s == "cutmix") return AugmentMode::kCutMix;
  if (s == "mixup") return AugmentMode::kMixup;
  throw ValidationError("unknown augment mode '" + s + "'");
}

void AugmentConfig::Validate() const {
  if (!(gamma >= 0.0)) throw ConfigError("gamma", "must be >= 0");
  if (!(mixup_keep > 0.0 && mixup_keep < 1.0)) {
    throw ConfigError("mixup_keep", "must be in (0, 1)");
  }
  if (k_paste < 1) throw ConfigError("k_paste", "must be >= 1");
  if (exemplar_pool_size < 1) {
    throw ConfigError("exemplar_pool_size", "must be >= 1");
  }
}

AugmentConfig HeavySkewAugmentConfig() {
  AugmentConfig c;
  c.gamma = 5.0;
  return c;
}

std::vector<double> AugProbabilities(const SampleWeights& weights,
                                     double gamma) {
  if (!(gamma >= 0.0)) throw ConfigError("gamma", "must be >= 0");
  const auto& u = weights.u;
  std::vector<double> p(u.size(), 0.0);
  if (u.empty()) return p;
  for (double v : u) {
    if (!std::isfinite(v)) throw ValidationError("weights must be finite");
  }
  const double top = *std::max_element(u.begin(), u.end());
  double span = 0.0;
  for (double v : u) span = std::max(span, top - v);
  if (span == 0.0) return p;
  for (size_t i = 0; i < u.size(); ++i) {
    p[i] = std::pow((top - u[i]) / span, gamma);
  }
  return p;
}

std::pair<Dataset, AugmentationPlan> BuildPlan(
    const Dataset& ds, const ConceptBottleneck& model,
    const SampleWeights& weights, const FeedbackSet& fb,
    const std::vector<ConceptExplanation>& explanations,
    const AugmentConfig& cfg) {
  cfg.Validate();
  if (fb.c_spur.empty()) {
    throw PreconditionError("c_spur is empty: nothing to augment with");
  }
  const std::vector<int> rows = ds.TrainIndices();
  if (weights.u.size() != rows.size()) {
    throw ValidationError("weight length does not match the train split");
  }

  // Exemplar pools and each exemplar's top-attribution segment.
  const std::vector<int> concepts(fb.c_spur.begin(), fb.c_spur.end());
  std::map<int, std::vector<std::pair<int, int>>> pools;  // c -> (id, seg)
  for (int c : concepts) {
    if (c < 0 || c >= model.n_concepts()) throw UnknownConceptError(c);
    auto it = std::find_if(explanations.begin(), explanations.end(),
                           [c](const auto& e) { return e.concept_id == c; });
    if (it == explanations.end()) {
      throw PreconditionError("no explanation for concept " + std::to_string(c));
    }
    const size_t k = std::min<size_t>(cfg.exemplar_pool_size,
                                      it->top_exemplars.size());
    if (k == 0) {
      throw Error("empty exemplar pool for concept " + std::to_string(c));
    }
    auto& pool = pools[c];
    for (size_t r = 0; r < k; ++r) {
      const auto& attr = it->segment_attribution[r];
      int best = 0;
      for (size_t s = 1; s < attr.size(); ++s) {
        if (std::abs(attr[s]) > std::abs(attr[best])) best = static_cast<int>(s);
      }
      pool.emplace_back(it->top_exemplars[r].first, best);
    }
  }

  AugmentationPlan plan;
  plan.gamma = cfg.gamma;
  plan.mode = cfg.mode;
  plan.p_aug = AugProbabilities(weights, cfg.gamma);

  Dataset out = ds;
  const int d = ds.segment_dim();
  for (size_t t = 0; t < rows.size(); ++t) {
    const int id = rows[t];
    Rng rng = MakeRng(cfg.seed, static_cast<uint64_t>(id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    AugmentRecord rec;
    rec.sample_id = id;
    rec.augmented = unit(rng) < plan.p_aug[t];
    if (rec.augmented) {
      std::uniform_int_distribution<size_t> pick_c(0, concepts.size() - 1);
      auto draw = [&]() {
        const int c = concepts[pick_c(rng)];
        const auto& pool = pools[c];
        std::uniform_int_distribution<size_t> pick_e(0, pool.size() - 1);
        return std::make_pair(c, pool[pick_e(rng)]);
      };
      if (cfg.mode == AugmentMode::kCutMix) {
        for (int j = 0; j < cfg.k_paste; ++j) {
          const auto [c, ex] = draw();
          const auto [exemplar, seg] = ex;
          out.features.block(id, seg * d, 1, d) =
              ds.features.block(exemplar, seg * d, 1, d);
          rec.pastes.push_back({c, exemplar, seg});
        }
      } else {
        const auto [c, ex] = draw();
        rec.concept_id = c;
        rec.exemplar_id = ex.first;
        rec.mix_ratio = cfg.mixup_keep;
        out.features.row(id) = cfg.mixup_keep * ds.features.row(id) +
                               (1.0 - cfg.mixup_keep) * ds.features.row(ex.first);
      }
    }
    plan.records.push_back(std::move(rec));
  }
  return {std::move(out), std::move(plan)};
}

std::string AugHistogramCsv(const std::vector<double>& p_aug, int bins) {
  return MakeHistogram(p_aug, bins, 0.0, 1.0).ToCsv();
}

}  // namespace cbdebug
