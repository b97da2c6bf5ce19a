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

#include "cbdebug/eval.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cbdebug/error.h"

namespace cbdebug {

double Auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("scores and labels differ in length");
  }
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks for ties.
  std::vector<double> rank(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (size_t i = 0; i < n; ++i) {
    if (labels[i] == 1) {
      ++pos;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) return 0.5;
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

GroupMetrics ComputeGroupMetrics(const std::vector<int>& preds,
                                 const Eigen::MatrixXd& scores,
                                 const std::vector<int>& y,
                                 const std::vector<int>& a) {
  const size_t n = y.size();
  if (n == 0) throw ValidationError("empty input");
  if (preds.size() != n || a.size() != n ||
      static_cast<size_t>(scores.rows()) != n) {
    throw ValidationError("preds, scores, labels and attrs must align");
  }
  GroupMetrics m;
  std::map<GroupKey, int64_t> correct;
  int64_t total_correct = 0;
  for (size_t i = 0; i < n; ++i) {
    const GroupKey key{y[i], a[i]};
    ++m.n[key];
    const bool ok = preds[i] == y[i];
    correct[key] += ok;
    total_correct += ok;
  }
  m.sample_average = static_cast<double>(total_correct) / static_cast<double>(n);
  m.worst_group = 1.0;
  double sum = 0.0;
  for (const auto& [key, count] : m.n) {
    const double acc =
        static_cast<double>(correct[key]) / static_cast<double>(count);
    m.accuracy[key] = acc;
    sum += acc;
    m.worst_group = std::min(m.worst_group, acc);
  }
  m.group_mean = sum / static_cast<double>(m.n.size());
  if (scores.cols() == 2) {
    const bool both = std::count(y.begin(), y.end(), 1) > 0 &&
                      std::count(y.begin(), y.end(), 0) > 0;
    if (both) {
      std::vector<double> s(scores.col(1).data(), scores.col(1).data() + n);
      m.auroc = Auroc(s, y);
    }
  }
  return m;
}

GroupMetrics EvaluateModel(const ConceptBottleneck& model, const Dataset& ds,
                           Split split) {
  const std::vector<int> rows = ds.Indices(split);
  const Prediction p = Predict(model, SelectRows(ds.features, rows));
  return ComputeGroupMetrics(p.labels, p.scores, SelectItems(ds.labels, rows),
                             SelectItems(ds.attrs, rows));
}

DependenceReport ComputeDependenceReport(const AuxLabels& aux,
                                         const std::vector<int>& y,
                                         int n_classes,
                                         const std::vector<double>* u) {
  const Eigen::Index n = aux.v.rows();
  if (static_cast<Eigen::Index>(y.size()) != n ||
      (u != nullptr && static_cast<Eigen::Index>(u->size()) != n)) {
    throw ValidationError("aux, labels and weights must align");
  }
  if (n == 0) throw ValidationError("empty input");
  DependenceReport report;
  report.weighted = u != nullptr;
  report.formula =
      "w = u / mean(u) (ones if unweighted); E_w[z] = sum(w z) / N; "
      "cov_w(v, y_k) = E_w[(v - E_w v)(1[y=k] - E_w 1[y=k])]; "
      "corr = cov_w / sqrt(var_w(v) var_w(1[y=k])); zero variance -> 0";
  std::vector<double> w(n, 1.0);
  if (u != nullptr) {
    const double mean = std::accumulate(u->begin(), u->end(), 0.0) / n;
    if (!(mean > 0.0)) throw ValidationError("weights must have positive mean");
    for (Eigen::Index i = 0; i < n; ++i) w[i] = (*u)[i] / mean;
  }
  auto moments = [&](const std::vector<double>& ww, Eigen::Index j, int k,
                     double* cov, double* corr) {
    double ev = 0, ey = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      ev += ww[i] * aux.v(i, j);
      ey += ww[i] * (y[i] == k);
    }
    ev /= n;
    ey /= n;
    double c = 0, vv = 0, vy = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double dv = aux.v(i, j) - ev, dy = (y[i] == k) - ey;
      c += ww[i] * dv * dy;
      vv += ww[i] * dv * dv;
      vy += ww[i] * dy * dy;
    }
    *cov = c / n;
    const double denom = std::sqrt((vv / n) * (vy / n));
    *corr = denom > 0.0 ? *cov / denom : 0.0;
    return denom > 0.0;
  };
  const std::vector<double> ones(n, 1.0);
  for (Eigen::Index j = 0; j < aux.v.cols(); ++j) {
    ColumnDependence col;
    col.concept_id = j < static_cast<Eigen::Index>(aux.concept_order.size())
                         ? aux.concept_order[j]
                         : static_cast<int>(j);
    for (int k = 0; k < n_classes; ++k) {
      double cov, corr;
      bool ok = moments(ones, j, k, &cov, &corr);
      col.cov_unweighted.push_back(cov);
      col.corr_unweighted.push_back(corr);
      ok = moments(w, j, k, &cov, &corr) && ok;
      col.cov_weighted.push_back(cov);
      col.corr_weighted.push_back(corr);
      if (!ok) col.zero_variance = true;
    }
    report.columns.push_back(std::move(col));
  }
  return report;
}

namespace {

std::vector<RankedConcept> TopConcepts(const ConceptBottleneck& m, int k,
                                       int top_n) {
  std::vector<RankedConcept> all;
  for (int c = 0; c < m.n_concepts(); ++c) {
    const double w = m.head_weights(k, c);
    if (m.active_mask[c] && w != 0.0) all.push_back({c, w, false});
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (std::abs(a.weight) != std::abs(b.weight)) {
      return std::abs(a.weight) > std::abs(b.weight);
    }
    return a.concept_id < b.concept_id;
  });
  if (static_cast<int>(all.size()) > top_n) all.resize(top_n);
  return all;
}

bool Contains(const std::vector<RankedConcept>& v, int id) {
  return std::any_of(v.begin(), v.end(),
                     [id](const auto& r) { return r.concept_id == id; });
}

}  // namespace

ConceptReport ComputeConceptReport(const ConceptBottleneck& before,
                                   const ConceptBottleneck& after, int top_n) {
  if (before.n_concepts() != after.n_concepts() ||
      before.n_classes() != after.n_classes()) {
    throw ValidationError("concept-id mismatch between models");
  }
  ConceptReport report;
  report.top_n = top_n;
  for (int k = 0; k < before.n_classes(); ++k) {
    ClassConcepts cc;
    cc.cls = k;
    cc.before = TopConcepts(before, k, top_n);
    cc.after = TopConcepts(after, k, top_n);
    for (auto& r : cc.before) r.changed = !Contains(cc.after, r.concept_id);
    for (auto& r : cc.after) r.changed = !Contains(cc.before, r.concept_id);
    report.classes.push_back(std::move(cc));
  }
  return report;
}

std::string MetricsCsv(const std::string& run_id, const RunMetrics& m) {
  std::ostringstream out;
  out.precision(10);
  out << "run,stage,y,a,n,accuracy\n";
  auto emit = [&](const char* stage, const GroupMetrics& g) {
    for (const auto& [key, acc] : g.accuracy) {
      out << run_id << ',' << stage << ',' << key.first << ',' << key.second
          << ',' << g.n.at(key) << ',' << acc << '\n';
    }
  };
  emit("before", m.before);
  if (m.after) emit("after", *m.after);
  return out.str();
}

std::string CompareTableText(const std::vector<CompareRow>& rows) {
  size_t w = 3;
  for (const auto& r : rows) w = std::max(w, r.run_id.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s  %-6s  %8s  %10s  %11s  %6s\n",
                static_cast<int>(w), "run", "stage", "average", "group_mean",
                "worst_group", "auroc");
  out << buf;
  for (const auto& r : rows) {
    char auroc[16] = "-";
    if (r.metrics.auroc) std::snprintf(auroc, sizeof(auroc), "%.4f", *r.metrics.auroc);
    std::snprintf(buf, sizeof(buf), "%-*s  %-6s  %8.4f  %10.4f  %11.4f  %6s\n",
                  static_cast<int>(w), r.run_id.c_str(), r.stage.c_str(),
                  r.metrics.sample_average, r.metrics.group_mean,
                  r.metrics.worst_group, auroc);
    out << buf;
  }
  return out.str();
}

std::string CompareTableCsv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "run,stage,average,group_mean,worst_group,auroc\n";
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.stage << ',' << r.metrics.sample_average << ','
        << r.metrics.group_mean << ',' << r.metrics.worst_group << ',';
    if (r.metrics.auroc) out << *r.metrics.auroc;
    out << '\n';
  }
  return out.str();
}

}  // namespace cbdebug
