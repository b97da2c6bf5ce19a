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

#include "cbdebug/retrain.h"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <map>
#include <sstream>

#include "cbdebug/error.h"
#include "cbdebug/random.h"

namespace cbdebug {
namespace {

constexpr const char* kNames[] = {"remove",        "retrain",      "protopdebug",
                                  "reweight_only", "augment_only", "cbdebug",
                                  "jtt",           "lff"};

std::string FormatIds(const std::set<int>& ids) {
  std::ostringstream out;
  out << '[';
  bool first = true;
  for (int c : ids) {
    out << (first ? "" : ", ") << c;
    first = false;
  }
  out << ']';
  return out.str();
}

std::string GroupMeans(const Dataset& ds, const std::vector<int>& rows,
                       const std::vector<double>& u) {
  std::map<GroupKey, std::pair<double, int>> acc;
  for (size_t t = 0; t < rows.size(); ++t) {
    auto& [sum, n] = acc[{ds.labels[rows[t]], ds.attrs[rows[t]]}];
    sum += u[t];
    ++n;
  }
  std::ostringstream out;
  out.precision(4);
  for (const auto& [key, sn] : acc) {
    out << " (" << key.first << "," << key.second << ")=" << sn.first / sn.second;
  }
  return out.str();
}

double CrossEntropy(const Eigen::RowVectorXd& scores, int y) {
  return -std::log(std::max(scores(y), 1e-300));
}

}  // namespace

const char* StrategyName(Strategy s) { return kNames[static_cast<int>(s)]; }

Strategy ParseStrategy(const std::string& s) {
  for (int i = 0; i < 8; ++i) {
    if (s == kNames[i]) return static_cast<Strategy>(i);
  }
  throw ValidationError("unknown strategy '" + s + "'");
}

std::vector<Strategy> AllStrategies() {
  std::vector<Strategy> out;
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<Strategy>(i));
  return out;
}

bool UsesFeedback(Strategy s) {
  return s != Strategy::kJtt && s != Strategy::kLff;
}

void StrategyConfig::Validate() const {
  if (retrain_epochs < 0) throw ConfigError("retrain_epochs", "must be >= 0");
  if (!(extractor_lr_divisor > 0.0)) {
    throw ConfigError("extractor_lr_divisor", "must be > 0");
  }
  permweight.Validate();
  augment.Validate();
  if (!(protopdebug.lambda_forget >= 0.0)) {
    throw ConfigError("protopdebug.lambda_forget", "must be >= 0");
  }
  if (jtt.T < 1) throw ConfigError("jtt.T", "must be >= 1");
  if (!(jtt.lambda_up >= 1.0)) throw ConfigError("jtt.lambda_up", "must be >= 1");
  if (!(lff.q > 0.0 && lff.q < 1.0)) throw ConfigError("lff.q", "must be in (0, 1)");
}

TrainConfig FineTuneConfig(const TrainConfig& original,
                           const StrategyConfig& cfg) {
  TrainConfig ft = original;
  ft.epochs = cfg.retrain_epochs > 0 ? cfg.retrain_epochs
                                     : std::max(1, original.epochs / 2);
  ft.lr_extractor = original.lr_extractor / cfg.extractor_lr_divisor;
  ft.seed = cfg.seed;
  ft.freeze_extractor = cfg.freeze_extractor;
  return ft;
}

StrategyResult RunStrategy(const ConceptBottleneck& model, const Dataset& ds,
                           const FeedbackSet* fb, const StrategyConfig& cfg,
                           ProgressFn progress) {
  cfg.Validate();
  const Strategy s = cfg.strategy;
  if (UsesFeedback(s) && fb == nullptr) {
    throw PreconditionError("no feedback recorded");
  }
  if (!UsesFeedback(s) && fb != nullptr) {
    throw ValidationError(std::string(StrategyName(s)) +
                          " is unsupervised and does not take feedback");
  }
  if (fb != nullptr) {
    for (int c : fb->c_spur) {
      if (c < 0 || c >= model.n_concepts()) throw UnknownConceptError(c);
    }
  }

  StrategyResult result;
  RunArtifacts& art = result.artifacts;
  art.model_before = model;
  auto log = [&](const std::string& line) { art.log.push_back(line); };
  log(std::string("strategy ") + StrategyName(s));

  const std::vector<int> rows = ds.TrainIndices();
  const Eigen::MatrixXd x = SelectRows(ds.features, rows);
  const std::vector<int> y = SelectItems(ds.labels, rows);
  const TrainConfig ft = FineTuneConfig(model.train_config, cfg);

  FitOptions opts;
  opts.progress = progress;

  if (!UsesFeedback(s)) {
    TrainConfig full = model.train_config;
    full.seed = cfg.seed;
    if (s == Strategy::kJtt) {
      TrainConfig id_cfg = full;
      id_cfg.epochs = cfg.jtt.T;
      const ConceptBottleneck id_model =
          Fit(Reinitialize(model, cfg.seed), x, y, id_cfg);
      const Prediction pred = Predict(id_model, x);
      SampleWeights w;
      w.provenance.method = "jtt";
      w.provenance.seed = cfg.seed;
      w.u.resize(y.size());
      int errors = 0;
      for (size_t i = 0; i < y.size(); ++i) {
        const bool wrong = pred.labels[i] != y[i];
        errors += wrong;
        w.u[i] = wrong ? cfg.jtt.lambda_up : 1.0;
      }
      log("jtt: identification model misclassifies " + std::to_string(errors) +
          " of " + std::to_string(y.size()) + " train samples; upweight " +
          std::to_string(cfg.jtt.lambda_up));
      opts.weights = &w.u;
      result.model = Fit(Reinitialize(model, cfg.seed), x, y, full, opts);
      art.weights = std::move(w);
    } else {
      // LfF: the bias model trains with GCE on the same batches; the
      // debiased model weights each sample by the relative difficulty
      // CE_b / (CE_b + CE_d), computed on per-sample loss EMAs scaled by
      // their class maximum. Without that normalisation the score feeds
      // back into a single-class collapse.
      ConceptBottleneck bias = Reinitialize(model, DeriveSeed(cfg.seed, 17));
      const double q = cfg.lff.q;
      constexpr double kEma = 0.7;
      const int n_classes = model.n_classes();
      std::vector<double> ema_b(y.size(), 0.0), ema_d(y.size(), 0.0);
      std::vector<char> seen(y.size(), 0);
      opts.batch_weights = [&](const std::vector<int>& batch,
                               const ConceptBottleneck& debiased) {
        const Eigen::MatrixXd xb = SelectRows(x, batch);
        const Prediction pb = Predict(bias, xb);
        const Prediction pd = Predict(debiased, xb);
        for (size_t i = 0; i < batch.size(); ++i) {
          const int r = batch[i];
          const double cb = CrossEntropy(pb.scores.row(i), y[r]);
          const double cd = CrossEntropy(pd.scores.row(i), y[r]);
          const double keep = seen[r] ? kEma : 0.0;
          ema_b[r] = keep * ema_b[r] + (1.0 - keep) * cb;
          ema_d[r] = keep * ema_d[r] + (1.0 - keep) * cd;
          seen[r] = 1;
        }
        std::vector<double> max_b(n_classes, 0.0), max_d(n_classes, 0.0);
        for (size_t r = 0; r < y.size(); ++r) {
          max_b[y[r]] = std::max(max_b[y[r]], ema_b[r]);
          max_d[y[r]] = std::max(max_d[y[r]], ema_d[r]);
        }
        std::vector<double> w(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) {
          const int r = batch[i];
          const double lb = max_b[y[r]] > 0 ? ema_b[r] / max_b[y[r]] : 0.0;
          const double ld = max_d[y[r]] > 0 ? ema_d[r] / max_d[y[r]] : 0.0;
          w[i] = lb + ld > 0.0 ? lb / (lb + ld) : 0.5;
        }
        // Mean one per batch: plain SGD is not scale-invariant the way the
        // usual Adam setup is, and tiny weights would stall training.
        const double mean =
            std::accumulate(w.begin(), w.end(), 0.0) / double(w.size());
        if (mean > 0.0) {
          for (double& v : w) v /= mean;
        }
        return w;
      };
      opts.after_batch = [&](const std::vector<int>& batch) {
        const Eigen::MatrixXd xb = SelectRows(x, batch);
        const std::vector<int> yb = SelectItems(y, batch);
        const Prediction pb = Predict(bias, xb);
        // d/dz GCE = p_y^q * d/dz CE.
        std::vector<double> w(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) {
          w[i] = std::pow(pb.scores(i, yb[i]), q);
        }
        SgdStep(bias, xb, yb, w, full, LossTerms{full.lambda_sparse});
      };
      result.model = Fit(Reinitialize(model, cfg.seed), x, y, full, opts);
      log("lff: q = " + std::to_string(q));
    }
    return result;
  }

  art.removed.assign(fb->c_spur.begin(), fb->c_spur.end());
  log("removed concepts " + FormatIds(fb->c_spur));
  const ConceptBottleneck removed = RemoveConcepts(model, fb->c_spur);

  switch (s) {
    case Strategy::kRemove:
      result.model = removed;
      if (progress) progress(1.0);
      return result;
    case Strategy::kRetrain:
      result.model = Fit(removed, x, y, ft, opts);
      return result;
    case Strategy::kProtoPDebug: {
      const auto expl = ExplainConcepts(model, ds, art.removed,
                                        cfg.augment.exemplar_pool_size);
      ForgetSet forget;
      for (const auto& e : expl) {
        for (const auto& [id, act] : e.top_exemplars) {
          forget.sample_ids.push_back(id);
          forget.concept_ids.push_back(e.concept_id);
        }
      }
      forget.features = SelectRows(ds.features, forget.sample_ids);
      const int d = ds.segment_dim();
      for (size_t r = 0; r < forget.sample_ids.size(); ++r) {
        const auto& window = model.concept_meta[forget.concept_ids[r]].segments;
        for (int seg = 0; seg < ds.n_segments(); ++seg) {
          if (std::find(window.begin(), window.end(), seg) == window.end()) {
            forget.features.row(r).segment(seg * d, d).setZero();
          }
        }
      }
      log("forget set: " + std::to_string(forget.sample_ids.size()) +
          " (exemplar, concept) pairs");
      art.forget_set = std::move(forget);
      opts.lambda_forget = cfg.protopdebug.lambda_forget;
      opts.forget = &*art.forget_set;
      result.model = Fit(removed, x, y, ft, opts);
      return result;
    }
    default:
      break;
  }

  // Label -> Reweight (-> Augment) -> fine-tune.
  art.aux = LabelAux(model, ds, *fb);
  PermWeightConfig pw = cfg.permweight;
  art.weights = ComputeWeights(*art.aux, y, pw);
  log("permutation weights: clip events " +
      std::to_string(art.weights->provenance.clip_events) + ", group means" +
      GroupMeans(ds, rows, art.weights->u));

  if (s == Strategy::kReweightOnly) {
    opts.weights = &art.weights->u;
    result.model = Fit(removed, x, y, ft, opts);
    return result;
  }

  const auto expl =
      ExplainConcepts(model, ds, art.removed, cfg.augment.exemplar_pool_size);
  auto [aug, plan] = BuildPlan(ds, model, *art.weights, *fb, expl, cfg.augment);
  int n_aug = 0;
  for (const auto& r : plan.records) n_aug += r.augmented;
  log(std::string("augmentation (") + AugmentModeName(plan.mode) + ", gamma " +
      std::to_string(plan.gamma) + "): " + std::to_string(n_aug) + " of " +
      std::to_string(rows.size()) + " train samples");
  art.plan = std::move(plan);
  const Eigen::MatrixXd x_aug = SelectRows(aug.features, rows);
  if (s == Strategy::kCbDebug) opts.weights = &art.weights->u;
  result.model = Fit(removed, x_aug, y, ft, opts);
  return result;
}

}  // namespace cbdebug
