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

#include "cbdebug/cbm.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cbdebug/error.h"
#include "cbdebug/random.h"

namespace cbdebug {
namespace {

Eigen::MatrixXd Sigmoid(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Eigen::RowVectorXd MaskRow(const ConceptBottleneck& model) {
  Eigen::RowVectorXd m(model.n_concepts());
  for (int c = 0; c < model.n_concepts(); ++c) {
    m(c) = model.active_mask[c] ? 1.0 : 0.0;
  }
  return m;
}

// Row-wise numerically stable softmax.
Eigen::MatrixXd Softmax(Eigen::MatrixXd z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z.row(i).array() -= z.row(i).maxCoeff();
    z.row(i) = z.row(i).array().exp().matrix();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

double Sign(double v) { return (v > 0.0) - (v < 0.0); }

void CheckFeatures(const ConceptBottleneck& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.n_features()) {
    throw ValidationError("feature dimension " + std::to_string(x.cols()) +
                          " does not match model input " +
                          std::to_string(model.n_features()));
  }
}

std::vector<double> NormalizeWeights(const std::vector<double>* weights,
                                     size_t n) {
  if (weights == nullptr) return {};
  if (weights->size() != n) {
    throw ValidationError("weight length " + std::to_string(weights->size()) +
                          " != number of training rows " + std::to_string(n));
  }
  double sum = 0.0;
  for (double w : *weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ValidationError("weights must be finite and >= 0");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw ValidationError("weights must have positive sum");
  // Uniform weighting is unweighted; skip the (inexact) normalisation.
  const bool uniform = std::all_of(weights->begin(), weights->end(),
                                   [&](double w) { return w == (*weights)[0]; });
  if (uniform) return {};
  const double mean = sum / static_cast<double>(n);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = (*weights)[i] / mean;
  return out;
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (!(lr_extractor > 0.0)) throw ConfigError("lr_extractor", "must be > 0");
  if (!(lr_head > 0.0)) throw ConfigError("lr_head", "must be > 0");
  if (!(lambda_sparse >= 0.0)) {
    throw ConfigError("lambda_sparse", "must be >= 0");
  }
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
}

Eigen::MatrixXd ConceptBottleneck::ReceptiveMask() const {
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(n_concepts(), n_features());
  for (int c = 0; c < n_concepts(); ++c) {
    for (int s : concept_meta[c].segments) {
      mask.block(c, s * segment_dim, 1, segment_dim).setOnes();
    }
  }
  return mask;
}

bool ConceptBottleneck::operator==(const ConceptBottleneck& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return n_segments == o.n_segments && segment_dim == o.segment_dim &&
         same(extractor_weights, o.extractor_weights) &&
         same(extractor_bias, o.extractor_bias) &&
         same(head_weights, o.head_weights) && same(head_bias, o.head_bias) &&
         active_mask == o.active_mask && concept_meta == o.concept_meta &&
         train_config == o.train_config && parent_run == o.parent_run;
}

ConceptBottleneck InitModel(int n_classes, int segments, int segment_dim,
                            const ArchitectureConfig& arch, uint64_t seed) {
  if (n_classes < 2) throw ConfigError("n_classes", "must be >= 2");
  if (segments < 1 || segment_dim < 1) {
    throw ConfigError("segments", "model needs segments >= 1 and dim >= 1");
  }
  if (arch.window_width < 1) throw ConfigError("window_width", "must be >= 1");
  if (arch.concepts_per_window < 1) {
    throw ConfigError("concepts_per_window", "must be >= 1");
  }
  const int width = std::min(arch.window_width, segments);
  const int m = segments * arch.concepts_per_window;
  if (m < 2) throw ConfigError("concepts_per_window", "need m >= 2 concepts");

  ConceptBottleneck model;
  model.n_segments = segments;
  model.segment_dim = segment_dim;
  model.concept_meta.resize(m);
  for (int c = 0; c < m; ++c) {
    const int start = c / arch.concepts_per_window;
    auto& meta = model.concept_meta[c];
    meta.id = c;
    for (int k = 0; k < width; ++k) {
      meta.segments.push_back((start + k) % segments);
    }
    std::sort(meta.segments.begin(), meta.segments.end());
  }
  model.head_weights.resize(n_classes, m);
  return Reinitialize(model, seed);
}

ConceptBottleneck Reinitialize(const ConceptBottleneck& layout, uint64_t seed) {
  ConceptBottleneck model = layout;
  const int m = static_cast<int>(layout.concept_meta.size());
  const int p = layout.n_segments * layout.segment_dim;
  const int n_classes = static_cast<int>(layout.head_weights.rows());
  Rng rng = MakeRng(seed, 0);
  std::normal_distribution<double> normal(0.0, 0.1);
  model.extractor_weights.resize(m, p);
  for (int c = 0; c < m; ++c) {
    for (int j = 0; j < p; ++j) model.extractor_weights(c, j) = normal(rng);
  }
  model.extractor_weights =
      model.extractor_weights.cwiseProduct(model.ReceptiveMask());
  model.extractor_bias = Eigen::VectorXd::Zero(m);
  model.head_weights.resize(n_classes, m);
  for (int k = 0; k < n_classes; ++k) {
    for (int c = 0; c < m; ++c) model.head_weights(k, c) = normal(rng);
  }
  model.head_bias = Eigen::VectorXd::Zero(n_classes);
  model.active_mask.assign(m, true);
  return model;
}

void NameConcepts(ConceptBottleneck& model,
                  const std::vector<SegmentRole>& roles) {
  std::vector<int> seen;
  for (auto& meta : model.concept_meta) {
    std::string name = "segments";
    bool core = false, background = false;
    for (size_t i = 0; i < meta.segments.size(); ++i) {
      name += (i == 0 ? " " : ",") + std::to_string(meta.segments[i]);
      const int s = meta.segments[i];
      if (s < static_cast<int>(roles.size())) {
        (roles[s] == SegmentRole::kCore ? core : background) = true;
      }
    }
    name += core && background ? " (core+background)"
            : core             ? " (core)"
                               : " (background)";
    // Disambiguate concepts that share a window.
    int dup = 0;
    for (const auto& other : model.concept_meta) {
      if (other.id == meta.id) break;
      if (other.segments == meta.segments) ++dup;
    }
    meta.name = name + " #" + std::to_string(dup);
  }
}

double Loss(const ConceptBottleneck& model, const Eigen::MatrixXd& x,
            const std::vector<int>& y, const std::vector<double>& w,
            const LossTerms& terms, Gradient* grad) {
  CheckFeatures(model, x);
  const Eigen::Index n = x.rows();
  const int L = model.n_classes();
  const Eigen::RowVectorXd mask = MaskRow(model);

  const Eigen::MatrixXd act =
      Sigmoid((x * model.extractor_weights.transpose()).rowwise() +
              model.extractor_bias.transpose());
  const Eigen::MatrixXd am = act.array().rowwise() * mask.array();
  Eigen::MatrixXd z = (am * model.head_weights.transpose()).rowwise() +
                      model.head_bias.transpose();
  const Eigen::MatrixXd prob = Softmax(z);

  double loss = 0.0;
  Eigen::MatrixXd g = prob;  // dCE/dz, then weighted and averaged
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    loss += wi * -std::log(std::max(prob(i, y[i]), 1e-300));
    g(i, y[i]) -= 1.0;
    g.row(i) *= wi / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  loss += terms.lambda_sparse * model.head_weights.cwiseAbs().sum();

  const bool use_forget = terms.forget != nullptr && !terms.forget->empty() &&
                          terms.lambda_forget != 0.0;
  // Responses of active concepts to the forget patches: nf x m.
  Eigen::MatrixXd forget_resp;
  double forget_scale = 0.0;
  if (use_forget) {
    const ForgetSet& f = *terms.forget;
    const double n_active = mask.sum();
    forget_resp = (f.features * model.extractor_weights.transpose())
                      .array()
                      .rowwise() *
                  mask.array();
    if (n_active > 0) {
      forget_scale = terms.lambda_forget /
                     (static_cast<double>(f.features.rows()) * n_active);
    }
    loss += forget_scale * forget_resp.squaredNorm();
  }

  if (grad != nullptr) {
    grad->head_weights = g.transpose() * am;
    for (int k = 0; k < L; ++k) {
      for (int c = 0; c < model.n_concepts(); ++c) {
        grad->head_weights(k, c) +=
            terms.lambda_sparse * Sign(model.head_weights(k, c));
        if (!model.active_mask[c]) grad->head_weights(k, c) = 0.0;
      }
    }
    grad->head_bias = g.colwise().sum().transpose();
    Eigen::MatrixXd ga = (g * model.head_weights).array().rowwise() *
                         mask.array();
    ga = ga.cwiseProduct(act).cwiseProduct(
        (1.0 - act.array()).matrix());
    grad->extractor_weights = ga.transpose() * x;
    grad->extractor_bias = ga.colwise().sum().transpose();
    if (use_forget) {
      grad->extractor_weights +=
          2.0 * forget_scale * forget_resp.transpose() * terms.forget->features;
    }
    grad->extractor_weights =
        grad->extractor_weights.cwiseProduct(model.ReceptiveMask());
  }
  return loss;
}

double SgdStep(ConceptBottleneck& model, const Eigen::MatrixXd& xb,
               const std::vector<int>& yb, const std::vector<double>& wb,
               const TrainConfig& cfg, const LossTerms& terms) {
  Gradient grad;
  const double loss = Loss(model, xb, yb, wb, terms, &grad);
  if (!std::isfinite(loss)) return loss;
  model.head_weights -= cfg.lr_head * grad.head_weights;
  model.head_bias -= cfg.lr_head * grad.head_bias;
  if (!cfg.freeze_extractor) {
    // Loss() already zeroes entries outside the receptive windows.
    model.extractor_weights -= cfg.lr_extractor * grad.extractor_weights;
    model.extractor_bias -= cfg.lr_extractor * grad.extractor_bias;
  }
  return loss;
}

ConceptBottleneck Fit(const ConceptBottleneck& start, const Eigen::MatrixXd& x,
                      const std::vector<int>& y, const TrainConfig& cfg,
                      const FitOptions& opts) {
  cfg.Validate();
  CheckFeatures(start, x);
  const int n = static_cast<int>(x.rows());
  if (n == 0 || static_cast<int>(y.size()) != n) {
    throw ValidationError("training rows and labels must be non-empty and "
                          "aligned");
  }
  for (int v : y) {
    if (v < 0 || v >= start.n_classes()) {
      throw ValidationError("label " + std::to_string(v) + " out of range");
    }
  }
  const std::vector<double> w = NormalizeWeights(opts.weights, n);

  ConceptBottleneck model = start;
  const LossTerms terms{cfg.lambda_sparse, opts.lambda_forget, opts.forget};
  Rng rng = MakeRng(cfg.seed, 1);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int n_batches = (n + cfg.batch_size - 1) / cfg.batch_size;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int b = 0; b < n_batches; ++b) {
      const int lo = b * cfg.batch_size;
      const int hi = std::min(n, lo + cfg.batch_size);
      std::vector<int> rows(order.begin() + lo, order.begin() + hi);
      Eigen::MatrixXd xb(hi - lo, x.cols());
      std::vector<int> yb(hi - lo);
      std::vector<double> wb;
      if (!w.empty() || opts.batch_weights) wb.assign(hi - lo, 1.0);
      std::vector<double> extra;
      if (opts.batch_weights) {
        extra = opts.batch_weights(rows, model);
        if (extra.size() != rows.size()) {
          throw ValidationError("batch weight hook returned wrong length");
        }
      }
      for (int i = 0; i < hi - lo; ++i) {
        xb.row(i) = x.row(rows[i]);
        yb[i] = y[rows[i]];
        if (!w.empty()) wb[i] = w[rows[i]];
        if (!extra.empty()) wb[i] *= extra[i];
      }
      const double loss = SgdStep(model, xb, yb, wb, cfg, terms);
      if (!std::isfinite(loss) || !model.extractor_weights.allFinite() ||
          !model.head_weights.allFinite()) {
        throw NumericalError("non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(b));
      }
      if (opts.after_batch) opts.after_batch(rows);
    }
    // Proximal step for the L1 term: exact zeros.
    const double t = cfg.lr_head * cfg.lambda_sparse;
    for (int c = 0; c < model.n_concepts(); ++c) {
      for (int k = 0; k < model.n_classes(); ++k) {
        double& h = model.head_weights(k, c);
        h = model.active_mask[c] ? Sign(h) * std::max(std::abs(h) - t, 0.0)
                                 : 0.0;
      }
    }
    if (opts.progress) opts.progress(double(epoch + 1) / cfg.epochs);
  }
  model.train_config = cfg;
  return model;
}

ConceptBottleneck Train(const Dataset& ds, const SampleWeights* weights,
                        const TrainConfig& cfg,
                        const ArchitectureConfig& arch, ProgressFn progress) {
  cfg.Validate();
  const std::vector<int> rows = ds.TrainIndices();
  if (weights != nullptr && weights->u.size() != rows.size()) {
    throw ValidationError("weight length " +
                          std::to_string(weights->u.size()) +
                          " != train split size " +
                          std::to_string(rows.size()));
  }
  ConceptBottleneck model = InitModel(ds.n_classes(), ds.n_segments(),
                                      ds.segment_dim(), arch, cfg.seed);
  NameConcepts(model, ds.segment_roles);
  FitOptions opts;
  opts.weights = weights != nullptr ? &weights->u : nullptr;
  opts.progress = std::move(progress);
  return Fit(model, SelectRows(ds.features, rows), SelectItems(ds.labels, rows),
             cfg, opts);
}

Eigen::MatrixXd ConceptActivations(const ConceptBottleneck& model,
                                   const Eigen::MatrixXd& x) {
  CheckFeatures(model, x);
  return Sigmoid((x * model.extractor_weights.transpose()).rowwise() +
                 model.extractor_bias.transpose());
}

Prediction PredictFromActivations(const ConceptBottleneck& model,
                                  const Eigen::MatrixXd& activations) {
  if (activations.cols() != model.n_concepts()) {
    throw ValidationError("activation width does not match concept count");
  }
  const Eigen::MatrixXd am =
      activations.array().rowwise() * MaskRow(model).array();
  Prediction p;
  p.scores = Softmax((am * model.head_weights.transpose()).rowwise() +
                     model.head_bias.transpose());
  p.labels.resize(p.scores.rows());
  for (Eigen::Index i = 0; i < p.scores.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < p.scores.cols(); ++k) {
      if (p.scores(i, k) > p.scores(i, best)) best = k;
    }
    p.labels[i] = best;
  }
  return p;
}

Prediction Predict(const ConceptBottleneck& model, const Eigen::MatrixXd& x) {
  return PredictFromActivations(model, ConceptActivations(model, x));
}

std::vector<ConceptExplanation> ExplainConcepts(
    const ConceptBottleneck& model, const Dataset& ds,
    const std::vector<int>& concept_ids, int k) {
  for (int c : concept_ids) {
    if (c < 0 || c >= model.n_concepts()) throw UnknownConceptError(c);
  }
  const std::vector<int> rows = ds.TrainIndices();
  if (k < 0) throw ValidationError("k must be >= 0");
  k = std::min<int>(k, static_cast<int>(rows.size()));
  const Eigen::MatrixXd act =
      ConceptActivations(model, SelectRows(ds.features, rows));
  const int d = model.segment_dim;
  std::vector<ConceptExplanation> out;
  std::vector<int> order(rows.size());
  for (int c : concept_ids) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) {
                        if (act(a, c) != act(b, c)) return act(a, c) > act(b, c);
                        return rows[a] < rows[b];
                      });
    ConceptExplanation e;
    e.concept_id = c;
    for (int r = 0; r < k; ++r) {
      const int id = rows[order[r]];
      e.top_exemplars.emplace_back(id, act(order[r], c));
      std::vector<double> attr(model.n_segments);
      for (int s = 0; s < model.n_segments; ++s) {
        attr[s] = model.extractor_weights.row(c).segment(s * d, d).dot(
            ds.features.row(id).segment(s * d, d));
      }
      e.segment_attribution.push_back(std::move(attr));
    }
    out.push_back(std::move(e));
  }
  return out;
}

ConceptExplanation ExplainConcept(const ConceptBottleneck& model,
                                  const Dataset& ds, int concept_id, int k) {
  return ExplainConcepts(model, ds, {concept_id}, k).front();
}

std::vector<int> RelevantConcepts(const ConceptBottleneck& model,
                                  double floor) {
  std::vector<int> out;
  for (int c = 0; c < model.n_concepts(); ++c) {
    if (model.active_mask[c] &&
        model.head_weights.col(c).cwiseAbs().maxCoeff() > floor) {
      out.push_back(c);
    }
  }
  return out;
}

ConceptBottleneck RemoveConcepts(const ConceptBottleneck& model,
                                 const std::set<int>& c_spur) {
  for (int c : c_spur) {
    if (c < 0 || c >= model.n_concepts()) throw UnknownConceptError(c);
  }
  ConceptBottleneck out = model;
  for (int c : c_spur) {
    out.head_weights.col(c).setZero();
    out.active_mask[c] = false;
  }
  return out;
}

}  // namespace cbdebug
