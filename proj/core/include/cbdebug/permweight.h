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

#ifndef CBDEBUG_PERMWEIGHT_H_
#define CBDEBUG_PERMWEIGHT_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cbdebug/feedback.h"
#include "cbdebug/weights.h"

namespace cbdebug {

// Logistic discriminator settings. Fitted by damped Newton: `epochs` caps
// the iterations and `lr` scales each step.
struct DiscriminatorConfig {
  int epochs = 50;
  double lr = 1.0;
  double l2 = 1e-4;

  bool operator==(const DiscriminatorConfig&) const = default;
};

struct PermWeightConfig {
  int k_folds = 5;
  int n_permutations = 5;
  DiscriminatorConfig classifier;
  double clip_max = 100.0;
  bool normalize_mean_one = true;
  uint64_t seed = 0;

  void Validate() const;
  bool operator==(const PermWeightConfig&) const = default;
};

std::vector<int> PermuteLabels(const std::vector<int>& y, uint64_t seed);

// [one-hot(y), v, one-hot(y) (x) v, 1].
Eigen::VectorXd DiscriminatorFeatures(int y, const Eigen::VectorXd& v,
                                      int n_classes);

struct Discriminator {
  int n_classes = 0;
  int n_v = 0;
  Eigen::VectorXd coef;  // last entry is the intercept

  // P(row comes from the permuted dataset).
  double Eta(int y, const Eigen::VectorXd& v) const;
};

// Mean logistic loss + (l2/2)|coef without intercept|^2 on rows `f`
// with targets `t` in {0, 1}.
double DiscriminatorLoss(const Eigen::MatrixXd& f, const Eigen::VectorXd& t,
                         const Eigen::VectorXd& coef, double l2,
                         Eigen::VectorXd* grad);

// D = (y, v) labelled 0, D' = (y_perm, v) labelled 1, over `rows` of v.
Discriminator FitEta(const std::vector<int>& y, const std::vector<int>& y_perm,
                     const Eigen::MatrixXd& v, int n_classes,
                     const std::vector<int>& rows,
                     const DiscriminatorConfig& cfg);

SampleWeights ComputeWeights(const AuxLabels& aux, const std::vector<int>& y,
                             const PermWeightConfig& cfg);
SampleWeights ComputeWeights(const Eigen::MatrixXd& v, const std::vector<int>& y,
                             const PermWeightConfig& cfg);

// u_i = p(y_i) p(v_i) / p(y_i, v_i). Throws if any cell of the product of
// observed marginals is empty.
SampleWeights AnalyticWeights(const std::vector<int>& v_codes,
                              const std::vector<int>& y);

void SaveWeights(const SampleWeights& w, const std::string& path);
SampleWeights LoadWeights(const std::string& path);

}  // namespace cbdebug

#endif  // CBDEBUG_PERMWEIGHT_H_
