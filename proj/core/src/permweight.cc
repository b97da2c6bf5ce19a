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

#include "cbdebug/permweight.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cbdebug/error.h"
#include "cbdebug/random.h"

namespace cbdebug {
namespace {

double Sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + exp(z)) without overflow.
double Softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

int NumClasses(const std::vector<int>& y) {
  int L = 0;
  for (int v : y) {
    if (v < 0) throw ValidationError("labels must be >= 0");
    L = std::max(L, v + 1);
  }
  return L;
}

}  // namespace

void PermWeightConfig::Validate() const {
  if (k_folds < 2) throw ConfigError("k_folds", "must be >= 2");
  if (n_permutations < 1) throw ConfigError("n_permutations", "must be >= 1");
  if (!(clip_max > 0.0)) throw ConfigError("clip_max", "must be > 0");
  if (classifier.epochs < 1) throw ConfigError("classifier.epochs", "must be >= 1");
  if (!(classifier.lr > 0.0)) throw ConfigError("classifier.lr", "must be > 0");
  if (!(classifier.l2 >= 0.0)) throw ConfigError("classifier.l2", "must be >= 0");
}

std::vector<int> PermuteLabels(const std::vector<int>& y, uint64_t seed) {
  std::vector<int> out = y;
  Rng rng = MakeRng(seed, 0);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

Eigen::VectorXd DiscriminatorFeatures(int y, const Eigen::VectorXd& v,
                                      int n_classes) {
  const Eigen::Index c = v.size();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n_classes + c + n_classes * c + 1);
  f(y) = 1.0;
  f.segment(n_classes, c) = v;
  f.segment(n_classes + c + y * c, c) = v;
  f(f.size() - 1) = 1.0;
  return f;
}

double Discriminator::Eta(int y, const Eigen::VectorXd& v) const {
  return Sigmoid(DiscriminatorFeatures(y, v, n_classes).dot(coef));
}

double DiscriminatorLoss(const Eigen::MatrixXd& f, const Eigen::VectorXd& t,
                         const Eigen::VectorXd& coef, double l2,
                         Eigen::VectorXd* grad) {
  const Eigen::Index n = f.rows();
  const Eigen::VectorXd z = f * coef;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss += Softplus(z(i)) - t(i) * z(i);
  loss /= static_cast<double>(n);
  const Eigen::Index q = coef.size() - 1;  // intercept is not penalised
  loss += 0.5 * l2 * coef.head(q).squaredNorm();
  if (grad != nullptr) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = Sigmoid(z(i)) - t(i);
    *grad = f.transpose() * r / static_cast<double>(n);
    grad->head(q) += l2 * coef.head(q);
  }
  return loss;
}

Discriminator FitEta(const std::vector<int>& y, const std::vector<int>& y_perm,
                     const Eigen::MatrixXd& v, int n_classes,
                     const std::vector<int>& rows,
                     const DiscriminatorConfig& cfg) {
  if (y.size() != y_perm.size() || static_cast<Eigen::Index>(y.size()) != v.rows()) {
    throw ValidationError("D and D' must have equal row counts and share v");
  }
  if (rows.empty()) {
    throw ValidationError("degenerate discriminator input: no rows");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index q = n_classes + v.cols() + n_classes * v.cols() + 1;
  Eigen::MatrixXd f(2 * n, q);
  Eigen::VectorXd t(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd vi = v.row(rows[i]).transpose();
    f.row(i) = DiscriminatorFeatures(y[rows[i]], vi, n_classes).transpose();
    t(i) = 0.0;
    f.row(n + i) =
        DiscriminatorFeatures(y_perm[rows[i]], vi, n_classes).transpose();
    t(n + i) = 1.0;
  }

  Discriminator d;
  d.n_classes = n_classes;
  d.n_v = static_cast<int>(v.cols());
  d.coef = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd reg = Eigen::MatrixXd::Identity(q, q) * cfg.l2;
  reg(q - 1, q - 1) = 0.0;
  reg.diagonal().array() += 1e-10;

  Eigen::VectorXd grad;
  double loss = DiscriminatorLoss(f, t, d.coef, cfg.l2, &grad);
  for (int it = 0; it < cfg.epochs; ++it) {
    Eigen::VectorXd s(2 * n);
    const Eigen::VectorXd z = f * d.coef;
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
      const double p = Sigmoid(z(i));
      s(i) = p * (1.0 - p);
    }
    const Eigen::MatrixXd hess =
        f.transpose() * s.asDiagonal() * f / static_cast<double>(2 * n) + reg;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    // Damped step with backtracking so the loss never increases.
    double scale = cfg.lr;
    Eigen::VectorXd next;
    double next_loss = loss;
    while (scale > 1e-8) {
      next = d.coef - scale * step;
      next_loss = DiscriminatorLoss(f, t, next, cfg.l2, nullptr);
      if (next_loss <= loss + 1e-12) break;
      scale *= 0.5;
    }
    if (scale <= 1e-8) break;
    d.coef = next;
    loss = DiscriminatorLoss(f, t, d.coef, cfg.l2, &grad);
    if ((scale * step).cwiseAbs().maxCoeff() < 1e-10) break;
  }
  return d;
}

SampleWeights ComputeWeights(const Eigen::MatrixXd& v, const std::vector<int>& y,
                             const PermWeightConfig& cfg) {
  cfg.Validate();
  const int n = static_cast<int>(y.size());
  if (v.rows() != n) {
    throw ValidationError("aux rows " + std::to_string(v.rows()) +
                          " != labels " + std::to_string(n));
  }
  if (!v.allFinite()) throw ValidationError("aux labels must be finite");
  const int n_classes = NumClasses(y);
  if (n < 2 * cfg.k_folds) {
    throw ValidationError("fold too small: " + std::to_string(n) +
                          " samples for " + std::to_string(cfg.k_folds) +
                          " folds (need >= 2 per class per fold)");
  }

  SampleWeights out;
  out.u.assign(n, 0.0);
  out.provenance.method = "permutation";
  out.provenance.k_folds = cfg.k_folds;
  out.provenance.n_permutations = cfg.n_permutations;
  out.provenance.seed = cfg.seed;

  const double lo = 1.0 / cfg.clip_max, hi = cfg.clip_max;
  for (int p = 0; p < cfg.n_permutations; ++p) {
    Rng rng = MakeRng(cfg.seed, static_cast<uint64_t>(p));
    std::vector<int> y_perm = y;
    std::shuffle(y_perm.begin(), y_perm.end(), rng);

    // Folds stratified by the original label.
    std::vector<int> fold(n, 0);
    for (int cls = 0; cls < n_classes; ++cls) {
      std::vector<int> idx;
      for (int i = 0; i < n; ++i) {
        if (y[i] == cls) idx.push_back(i);
      }
      std::shuffle(idx.begin(), idx.end(), rng);
      for (size_t j = 0; j < idx.size(); ++j) {
        fold[idx[j]] = static_cast<int>(j % cfg.k_folds);
      }
    }

    for (int k = 0; k < cfg.k_folds; ++k) {
      std::vector<int> train, held;
      for (int i = 0; i < n; ++i) (fold[i] == k ? held : train).push_back(i);
      // Each row contributes one D and one D' example.
      if (held.size() < 2 || train.size() < 2) {
        throw ValidationError("fold too small: fold " + std::to_string(k) +
                              " has " + std::to_string(held.size()) +
                              " held-out samples");
      }
      const Discriminator d =
          FitEta(y, y_perm, v, n_classes, train, cfg.classifier);
      for (int i : held) {
        const double eta = d.Eta(y[i], v.row(i).transpose());
        double u = eta / (1.0 - eta);
        if (std::isnan(u)) {
          throw NumericalError("non-finite eta for sample " + std::to_string(i));
        }
        if (u < lo || u > hi) {
          ++out.provenance.clip_events;
          u = std::clamp(u, lo, hi);
        }
        out.u[i] += u;
      }
    }
  }
  for (double& u : out.u) u /= cfg.n_permutations;
  if (cfg.normalize_mean_one) {
    const double mean =
        std::accumulate(out.u.begin(), out.u.end(), 0.0) / static_cast<double>(n);
    for (double& u : out.u) u /= mean;
    out.mean_normalized = true;
  }
  return out;
}

SampleWeights ComputeWeights(const AuxLabels& aux, const std::vector<int>& y,
                             const PermWeightConfig& cfg) {
  return ComputeWeights(aux.v, y, cfg);
}

SampleWeights AnalyticWeights(const std::vector<int>& v_codes,
                              const std::vector<int>& y) {
  if (v_codes.size() != y.size()) {
    throw ValidationError("v and y lengths differ");
  }
  if (y.empty()) throw ValidationError("empty input");
  std::map<int, int64_t> ny, nv;
  std::map<std::pair<int, int>, int64_t> nyv;
  for (size_t i = 0; i < y.size(); ++i) {
    ++ny[y[i]];
    ++nv[v_codes[i]];
    ++nyv[{y[i], v_codes[i]}];
  }
  for (const auto& [yy, cy] : ny) {
    for (const auto& [vv, cv] : nv) {
      if (!nyv.count({yy, vv})) {
        throw ValidationError("zero-count joint cell (y=" + std::to_string(yy) +
                              ", v=" + std::to_string(vv) +
                              "): weight undefined");
      }
    }
  }
  const double n = static_cast<double>(y.size());
  SampleWeights out;
  out.provenance.method = "analytic";
  out.u.resize(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    out.u[i] = static_cast<double>(ny[y[i]]) * static_cast<double>(nv[v_codes[i]]) /
               (n * static_cast<double>(nyv[{y[i], v_codes[i]}]));
  }
  return out;
}

}  // namespace cbdebug
