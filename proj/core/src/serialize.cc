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

#include "serialize.h"

#include <set>

#include "cbdebug/error.h"
#include "cbdebug/io.h"

namespace cbdebug {
namespace serial {
namespace {

json MatrixToJson(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd MatrixFromJson(const json& j, Eigen::Index cols_if_empty = 0) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols =
      rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j.at(i);
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw SchemaError("ragged matrix row " + std::to_string(i));
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row.at(k).get<double>();
  }
  return m;
}

json VectorToJson(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd VectorFromJson(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

// Reads known keys from a config object and rejects the rest.
class Fields {
 public:
  Fields(const json& j, const char* what) : j_(j), what_(what) {
    if (!j.is_object()) {
      throw ValidationError(std::string(what) + " must be a JSON object");
    }
  }
  template <class T>
  void Get(const char* key, T* out) {
    known_.insert(key);
    if (j_.contains(key)) *out = j_.at(key).get<T>();
  }
  const json* Sub(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void Done() const {
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) {
        throw ValidationError("unknown field '" + item.key() + "' in " + what_);
      }
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> known_;
};

json RefOrNull(const std::string& s) { return s.empty() ? json(nullptr) : json(s); }
std::string RefFrom(const json& j, const char* key) {
  return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<std::string>()
                                                  : std::string();
}

template <class F>
auto Guard(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw SchemaError(what + ": " + e.what());
  }
}

}  // namespace

json LoadVersioned(const std::string& path, const char* version) {
  const std::string text = ReadFile(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": malformed JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("version") || !j["version"].is_string()) {
    throw SchemaError(path + ": missing version tag");
  }
  if (j["version"] != version) {
    throw VersionError(path + ": unknown version '" +
                       j["version"].get<std::string>() + "' (expected " +
                       version + ")");
  }
  return j;
}

void SaveJson(const std::string& path, const json& j, int indent) {
  WriteFileAtomic(path, j.dump(indent) + "\n");
}

// --- configs --------------------------------------------------------------

json ToJson(const DatasetConfig& c) {
  json counts = json::array();
  for (const auto& [key, n] : c.group_counts) {
    counts.push_back({{"y", key.first}, {"a", key.second}, {"count", n}});
  }
  return {{"n_classes", c.n_classes},
          {"n_spurious_attrs", c.n_spurious_attrs},
          {"group_counts", counts},
          {"segments", c.segments},
          {"segment_dim", c.segment_dim},
          {"core_segments", c.core_segments},
          {"core_signal_strength", c.core_signal_strength},
          {"spurious_signal_strength", c.spurious_signal_strength},
          {"noise_std", c.noise_std},
          {"val_per_group", c.val_per_group},
          {"test_per_group", c.test_per_group},
          {"seed", c.seed}};
}

DatasetConfig DatasetConfigFromJson(const json& j, DatasetConfig c) {
  Fields f(j, "dataset config");
  f.Get("n_classes", &c.n_classes);
  f.Get("n_spurious_attrs", &c.n_spurious_attrs);
  if (const json* counts = f.Sub("group_counts")) {
    c.group_counts.clear();
    for (const json& e : *counts) {
      c.group_counts[{e.at("y").get<int>(), e.at("a").get<int>()}] =
          e.at("count").get<int>();
    }
  }
  f.Get("segments", &c.segments);
  f.Get("segment_dim", &c.segment_dim);
  f.Get("core_segments", &c.core_segments);
  f.Get("core_signal_strength", &c.core_signal_strength);
  f.Get("spurious_signal_strength", &c.spurious_signal_strength);
  f.Get("noise_std", &c.noise_std);
  f.Get("val_per_group", &c.val_per_group);
  f.Get("test_per_group", &c.test_per_group);
  f.Get("seed", &c.seed);
  f.Done();
  return c;
}

json ToJson(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr_extractor", c.lr_extractor},
          {"lr_head", c.lr_head},
          {"lambda_sparse", c.lambda_sparse},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"freeze_extractor", c.freeze_extractor}};
}

TrainConfig TrainConfigFromJson(const json& j, TrainConfig c) {
  Fields f(j, "train config");
  f.Get("epochs", &c.epochs);
  f.Get("lr_extractor", &c.lr_extractor);
  f.Get("lr_head", &c.lr_head);
  f.Get("lambda_sparse", &c.lambda_sparse);
  f.Get("batch_size", &c.batch_size);
  f.Get("seed", &c.seed);
  f.Get("freeze_extractor", &c.freeze_extractor);
  f.Done();
  return c;
}

json ToJson(const ArchitectureConfig& c) {
  return {{"window_width", c.window_width},
          {"concepts_per_window", c.concepts_per_window}};
}

ArchitectureConfig ArchitectureFromJson(const json& j, ArchitectureConfig c) {
  Fields f(j, "architecture");
  f.Get("window_width", &c.window_width);
  f.Get("concepts_per_window", &c.concepts_per_window);
  f.Done();
  return c;
}

json ToJson(const PermWeightConfig& c) {
  return {{"k_folds", c.k_folds},
          {"n_permutations", c.n_permutations},
          {"classifier",
           {{"epochs", c.classifier.epochs},
            {"lr", c.classifier.lr},
            {"l2", c.classifier.l2}}},
          {"clip_max", c.clip_max},
          {"normalize_mean_one", c.normalize_mean_one},
          {"seed", c.seed}};
}

PermWeightConfig PermWeightConfigFromJson(const json& j, PermWeightConfig c) {
  Fields f(j, "permweight");
  f.Get("k_folds", &c.k_folds);
  f.Get("n_permutations", &c.n_permutations);
  if (const json* cl = f.Sub("classifier")) {
    Fields g(*cl, "permweight.classifier");
    g.Get("epochs", &c.classifier.epochs);
    g.Get("lr", &c.classifier.lr);
    g.Get("l2", &c.classifier.l2);
    g.Done();
  }
  f.Get("clip_max", &c.clip_max);
  f.Get("normalize_mean_one", &c.normalize_mean_one);
  f.Get("seed", &c.seed);
  f.Done();
  return c;
}

json ToJson(const AugmentConfig& c) {
  return {{"gamma", c.gamma},
          {"mode", AugmentModeName(c.mode)},
          {"mixup_keep", c.mixup_keep},
          {"k_paste", c.k_paste},
          {"exemplar_pool_size", c.exemplar_pool_size},
          {"seed", c.seed}};
}

AugmentConfig AugmentConfigFromJson(const json& j, AugmentConfig c) {
  Fields f(j, "augment");
  f.Get("gamma", &c.gamma);
  std::string mode = AugmentModeName(c.mode);
  f.Get("mode", &mode);
  c.mode = ParseAugmentMode(mode);
  f.Get("mixup_keep", &c.mixup_keep);
  f.Get("k_paste", &c.k_paste);
  f.Get("exemplar_pool_size", &c.exemplar_pool_size);
  f.Get("seed", &c.seed);
  f.Done();
  return c;
}

json ToJson(const StrategyConfig& c) {
  return {{"strategy", StrategyName(c.strategy)},
          {"retrain_epochs", c.retrain_epochs},
          {"extractor_lr_divisor", c.extractor_lr_divisor},
          {"freeze_extractor", c.freeze_extractor},
          {"seed", c.seed},
          {"permweight", ToJson(c.permweight)},
          {"augment", ToJson(c.augment)},
          {"protopdebug", {{"lambda_forget", c.protopdebug.lambda_forget}}},
          {"jtt", {{"T", c.jtt.T}, {"lambda_up", c.jtt.lambda_up}}},
          {"lff", {{"q", c.lff.q}}}};
}

StrategyConfig StrategyConfigFromJson(const json& j, StrategyConfig c) {
  Fields f(j, "strategy config");
  std::string name = StrategyName(c.strategy);
  f.Get("strategy", &name);
  c.strategy = ParseStrategy(name);
  f.Get("retrain_epochs", &c.retrain_epochs);
  f.Get("extractor_lr_divisor", &c.extractor_lr_divisor);
  f.Get("freeze_extractor", &c.freeze_extractor);
  f.Get("seed", &c.seed);
  if (const json* s = f.Sub("permweight")) {
    c.permweight = PermWeightConfigFromJson(*s, c.permweight);
  }
  if (const json* s = f.Sub("augment")) {
    c.augment = AugmentConfigFromJson(*s, c.augment);
  }
  if (const json* s = f.Sub("protopdebug")) {
    Fields g(*s, "protopdebug");
    g.Get("lambda_forget", &c.protopdebug.lambda_forget);
    g.Done();
  }
  if (const json* s = f.Sub("jtt")) {
    Fields g(*s, "jtt");
    g.Get("T", &c.jtt.T);
    g.Get("lambda_up", &c.jtt.lambda_up);
    g.Done();
  }
  if (const json* s = f.Sub("lff")) {
    Fields g(*s, "lff");
    g.Get("q", &c.lff.q);
    g.Done();
  }
  f.Done();
  return c;
}

// --- artifacts ------------------------------------------------------------

json ToJson(const Dataset& ds) {
  json roles = json::array();
  for (SegmentRole r : ds.segment_roles) roles.push_back(SegmentRoleName(r));
  json rows = json::array();
  for (int i = 0; i < ds.size(); ++i) {
    const Eigen::RowVectorXd x = ds.features.row(i);
    rows.push_back({{"x", std::vector<double>(x.data(), x.data() + x.size())},
                    {"y", ds.labels[i]},
                    {"a", ds.attrs[i]},
                    {"split", SplitName(ds.split[i])}});
  }
  return {{"version", kDatasetVersion},
          {"config", ToJson(ds.config)},
          {"segment_roles", roles},
          {"rows", rows}};
}

Dataset DatasetFromJson(const json& j) {
  Dataset ds;
  ds.config = DatasetConfigFromJson(j.at("config"));
  for (const json& r : j.at("segment_roles")) {
    const std::string s = r.get<std::string>();
    if (s == "core") {
      ds.segment_roles.push_back(SegmentRole::kCore);
    } else if (s == "background") {
      ds.segment_roles.push_back(SegmentRole::kBackground);
    } else {
      throw SchemaError("unknown segment role '" + s + "'");
    }
  }
  const json& rows = j.at("rows");
  const int n = static_cast<int>(rows.size());
  const int p = ds.n_segments() * ds.config.segment_dim;
  ds.features.resize(n, p);
  ds.labels.resize(n);
  ds.attrs.resize(n);
  ds.split.resize(n);
  for (int i = 0; i < n; ++i) {
    const json& r = rows.at(i);
    const json& x = r.at("x");
    if (static_cast<int>(x.size()) != p) {
      throw SchemaError("row " + std::to_string(i) + " has " +
                        std::to_string(x.size()) + " features, expected " +
                        std::to_string(p));
    }
    for (int k = 0; k < p; ++k) ds.features(i, k) = x.at(k).get<double>();
    ds.labels[i] = r.at("y").get<int>();
    ds.attrs[i] = r.at("a").get<int>();
    const std::string s = r.at("split").get<std::string>();
    if (s == "train") {
      ds.split[i] = Split::kTrain;
    } else if (s == "val") {
      ds.split[i] = Split::kVal;
    } else if (s == "test") {
      ds.split[i] = Split::kTest;
    } else {
      throw SchemaError("unknown split '" + s + "'");
    }
  }
  return ds;
}

json ToJson(const ConceptBottleneck& m) {
  json meta = json::array();
  for (const auto& c : m.concept_meta) {
    meta.push_back({{"id", c.id}, {"name", c.name}, {"segments", c.segments}});
  }
  std::vector<bool> mask = m.active_mask;
  return {{"version", kModelVersion},
          {"dims",
           {{"n_concepts", m.n_concepts()},
            {"n_features", m.n_features()},
            {"n_classes", m.n_classes()},
            {"n_segments", m.n_segments},
            {"segment_dim", m.segment_dim}}},
          {"extractor_weights", MatrixToJson(m.extractor_weights)},
          {"extractor_bias", VectorToJson(m.extractor_bias)},
          {"head_weights", MatrixToJson(m.head_weights)},
          {"head_bias", VectorToJson(m.head_bias)},
          {"active_mask", mask},
          {"concept_meta", meta},
          {"train_config", ToJson(m.train_config)},
          {"parent_run", RefOrNull(m.parent_run)}};
}

ConceptBottleneck ModelFromJson(const json& j) {
  ConceptBottleneck m;
  const json& dims = j.at("dims");
  const int n_concepts = dims.at("n_concepts").get<int>();
  const int n_features = dims.at("n_features").get<int>();
  const int n_classes = dims.at("n_classes").get<int>();
  m.n_segments = dims.at("n_segments").get<int>();
  m.segment_dim = dims.at("segment_dim").get<int>();
  m.extractor_weights = MatrixFromJson(j.at("extractor_weights"), n_features);
  m.extractor_bias = VectorFromJson(j.at("extractor_bias"));
  m.head_weights = MatrixFromJson(j.at("head_weights"), n_concepts);
  m.head_bias = VectorFromJson(j.at("head_bias"));
  m.active_mask = j.at("active_mask").get<std::vector<bool>>();
  for (const json& c : j.at("concept_meta")) {
    m.concept_meta.push_back({c.at("id").get<int>(),
                              c.at("name").get<std::string>(),
                              c.at("segments").get<std::vector<int>>()});
  }
  m.train_config = TrainConfigFromJson(j.at("train_config"));
  m.parent_run = RefFrom(j, "parent_run");
  if (m.n_concepts() != n_concepts || m.n_features() != n_features ||
      m.n_classes() != n_classes || m.extractor_bias.size() != n_concepts ||
      m.head_bias.size() != n_classes ||
      static_cast<int>(m.active_mask.size()) != n_concepts ||
      static_cast<int>(m.concept_meta.size()) != n_concepts ||
      n_features != m.n_segments * m.segment_dim) {
    throw SchemaError("model dims do not match parameter shapes");
  }
  for (const auto& c : m.concept_meta) {
    for (int s : c.segments) {
      if (s < 0 || s >= m.n_segments) {
        throw SchemaError("concept " + std::to_string(c.id) +
                          " reads segment out of range");
      }
    }
  }
  return m;
}

json ToJson(const FeedbackSet& fb) {
  json verdicts = json::array();
  for (const auto& [id, v] : fb.verdicts) {
    verdicts.push_back({{"concept_id", id},
                        {"verdict", VerdictName(v.verdict)},
                        {"justification", v.justification}});
  }
  return {{"version", kFeedbackVersion},
          {"c_spur", std::vector<int>(fb.c_spur.begin(), fb.c_spur.end())},
          {"source", FeedbackSourceName(fb.source)},
          {"verdicts", verdicts},
          {"created_at", fb.created_at}};
}

FeedbackSet FeedbackFromJson(const json& j) {
  FeedbackSet fb;
  for (int c : j.at("c_spur").get<std::vector<int>>()) fb.c_spur.insert(c);
  fb.source = ParseFeedbackSource(j.at("source").get<std::string>());
  for (const json& v : j.at("verdicts")) {
    ConceptVerdict cv;
    const std::string name = v.at("verdict").get<std::string>();
    if (name == "spurious") {
      cv.verdict = Verdict::kSpurious;
    } else if (name == "not_spurious") {
      cv.verdict = Verdict::kNotSpurious;
    } else if (name == "abstain") {
      cv.verdict = Verdict::kAbstain;
    } else {
      throw SchemaError("unknown verdict '" + name + "'");
    }
    cv.justification = v.at("justification").get<std::string>();
    fb.verdicts[v.at("concept_id").get<int>()] = std::move(cv);
  }
  fb.created_at = j.at("created_at").get<std::string>();
  return fb;
}

json ToJson(const AuxLabels& aux) {
  return {{"version", kAuxVersion},
          {"concept_order", aux.concept_order},
          {"sample_order", aux.sample_order},
          {"v", MatrixToJson(aux.v)}};
}

AuxLabels AuxFromJson(const json& j) {
  AuxLabels aux;
  aux.concept_order = j.at("concept_order").get<std::vector<int>>();
  aux.sample_order = j.at("sample_order").get<std::vector<int>>();
  aux.v = MatrixFromJson(j.at("v"),
                         static_cast<Eigen::Index>(aux.concept_order.size()));
  if (aux.v.cols() != static_cast<Eigen::Index>(aux.concept_order.size()) ||
      aux.v.rows() != static_cast<Eigen::Index>(aux.sample_order.size())) {
    throw SchemaError("aux matrix shape does not match its orders");
  }
  return aux;
}

json ToJson(const SampleWeights& w) {
  return {{"version", kWeightsVersion},
          {"u", w.u},
          {"provenance",
           {{"method", w.provenance.method},
            {"k_folds", w.provenance.k_folds},
            {"n_permutations", w.provenance.n_permutations},
            {"seed", w.provenance.seed},
            {"clip_events", w.provenance.clip_events}}},
          {"mean_normalized", w.mean_normalized}};
}

SampleWeights WeightsFromJson(const json& j) {
  SampleWeights w;
  w.u = j.at("u").get<std::vector<double>>();
  const json& p = j.at("provenance");
  w.provenance.method = p.at("method").get<std::string>();
  w.provenance.k_folds = p.at("k_folds").get<int>();
  w.provenance.n_permutations = p.at("n_permutations").get<int>();
  w.provenance.seed = p.at("seed").get<uint64_t>();
  w.provenance.clip_events = p.at("clip_events").get<int64_t>();
  w.mean_normalized = j.at("mean_normalized").get<bool>();
  return w;
}

json ToJson(const AugmentationPlan& p) {
  json records = json::array();
  for (const auto& r : p.records) {
    json pastes = json::array();
    for (const auto& s : r.pastes) {
      pastes.push_back({{"concept_id", s.concept_id},
                        {"exemplar_id", s.exemplar_id},
                        {"segment", s.segment}});
    }
    records.push_back({{"sample_id", r.sample_id},
                       {"augmented", r.augmented},
                       {"pastes", pastes},
                       {"concept_id", r.concept_id},
                       {"exemplar_id", r.exemplar_id},
                       {"mix_ratio", r.mix_ratio}});
  }
  return {{"version", kPlanVersion},
          {"gamma", p.gamma},
          {"mode", AugmentModeName(p.mode)},
          {"p_aug", p.p_aug},
          {"records", records}};
}

AugmentationPlan PlanFromJson(const json& j) {
  AugmentationPlan p;
  p.gamma = j.at("gamma").get<double>();
  p.mode = ParseAugmentMode(j.at("mode").get<std::string>());
  p.p_aug = j.at("p_aug").get<std::vector<double>>();
  for (const json& r : j.at("records")) {
    AugmentRecord rec;
    rec.sample_id = r.at("sample_id").get<int>();
    rec.augmented = r.at("augmented").get<bool>();
    for (const json& s : r.at("pastes")) {
      rec.pastes.push_back({s.at("concept_id").get<int>(),
                            s.at("exemplar_id").get<int>(),
                            s.at("segment").get<int>()});
    }
    rec.concept_id = r.at("concept_id").get<int>();
    rec.exemplar_id = r.at("exemplar_id").get<int>();
    rec.mix_ratio = r.at("mix_ratio").get<double>();
    p.records.push_back(std::move(rec));
  }
  return p;
}

json ToJson(const ForgetSet& f) {
  return {{"version", kForgetVersion},
          {"sample_ids", f.sample_ids},
          {"concept_ids", f.concept_ids},
          {"features", MatrixToJson(f.features)}};
}

ForgetSet ForgetSetFromJson(const json& j) {
  ForgetSet f;
  f.sample_ids = j.at("sample_ids").get<std::vector<int>>();
  f.concept_ids = j.at("concept_ids").get<std::vector<int>>();
  f.features = MatrixFromJson(j.at("features"));
  if (f.sample_ids.size() != f.concept_ids.size() ||
      f.features.rows() != static_cast<Eigen::Index>(f.sample_ids.size())) {
    throw SchemaError("forget set columns differ in length");
  }
  return f;
}

json ToJson(const GroupMetrics& m) {
  json groups = json::array();
  for (const auto& [key, acc] : m.accuracy) {
    groups.push_back({{"y", key.first},
                      {"a", key.second},
                      {"n", m.n.at(key)},
                      {"accuracy", acc}});
  }
  return {{"groups", groups},
          {"sample_average", m.sample_average},
          {"group_mean", m.group_mean},
          {"worst_group", m.worst_group},
          {"auroc", m.auroc ? json(*m.auroc) : json(nullptr)}};
}

GroupMetrics GroupMetricsFromJson(const json& j) {
  GroupMetrics m;
  for (const json& g : j.at("groups")) {
    const GroupKey key{g.at("y").get<int>(), g.at("a").get<int>()};
    m.accuracy[key] = g.at("accuracy").get<double>();
    m.n[key] = g.at("n").get<int64_t>();
  }
  m.sample_average = j.at("sample_average").get<double>();
  m.group_mean = j.at("group_mean").get<double>();
  m.worst_group = j.at("worst_group").get<double>();
  if (!j.at("auroc").is_null()) m.auroc = j.at("auroc").get<double>();
  return m;
}

namespace {

json RankedToJson(const std::vector<RankedConcept>& v) {
  json out = json::array();
  for (const auto& r : v) {
    out.push_back({{"concept_id", r.concept_id},
                   {"weight", r.weight},
                   {"changed", r.changed}});
  }
  return out;
}

std::vector<RankedConcept> RankedFromJson(const json& j) {
  std::vector<RankedConcept> out;
  for (const json& r : j) {
    out.push_back({r.at("concept_id").get<int>(), r.at("weight").get<double>(),
                   r.at("changed").get<bool>()});
  }
  return out;
}

}  // namespace

json ToJson(const ConceptReport& r) {
  json classes = json::array();
  for (const auto& c : r.classes) {
    classes.push_back({{"class", c.cls},
                       {"before", RankedToJson(c.before)},
                       {"after", RankedToJson(c.after)}});
  }
  return {{"top_n", r.top_n}, {"classes", classes}};
}

ConceptReport ConceptReportFromJson(const json& j) {
  ConceptReport r;
  r.top_n = j.at("top_n").get<int>();
  for (const json& c : j.at("classes")) {
    r.classes.push_back({c.at("class").get<int>(), RankedFromJson(c.at("before")),
                         RankedFromJson(c.at("after"))});
  }
  return r;
}

json ToJson(const RunMetrics& m) {
  return {{"version", kMetricsVersion},
          {"before", ToJson(m.before)},
          {"after", m.after ? ToJson(*m.after) : json(nullptr)},
          {"concept_report",
           m.concept_report ? ToJson(*m.concept_report) : json(nullptr)}};
}

RunMetrics RunMetricsFromJson(const json& j) {
  RunMetrics m;
  m.before = GroupMetricsFromJson(j.at("before"));
  if (!j.at("after").is_null()) m.after = GroupMetricsFromJson(j.at("after"));
  if (!j.at("concept_report").is_null()) {
    m.concept_report = ConceptReportFromJson(j.at("concept_report"));
  }
  return m;
}

json ToJson(const ConceptExplanation& e) {
  json ex = json::array();
  for (size_t i = 0; i < e.top_exemplars.size(); ++i) {
    ex.push_back({{"sample_id", e.top_exemplars[i].first},
                  {"activation", e.top_exemplars[i].second},
                  {"segment_attribution", e.segment_attribution[i]}});
  }
  return ex;
}

json ToJson(const Histogram& h) {
  return {{"bins", h.edges}, {"counts", h.counts}};
}

json ToJson(const RunRecord& r) {
  return {{"version", kRunVersion},
          {"run_id", r.run_id},
          {"preset", r.preset},
          {"dataset_ref", RefOrNull(r.dataset_ref)},
          {"model_before_ref", RefOrNull(r.model_before_ref)},
          {"model_after_ref", RefOrNull(r.model_after_ref)},
          {"feedback_ref", RefOrNull(r.feedback_ref)},
          {"metrics_ref", RefOrNull(r.metrics_ref)},
          {"status", RunStatusName(r.status)},
          {"progress", r.progress},
          {"message", r.message},
          {"arch", ToJson(r.arch)},
          {"train_config", ToJson(r.train_config)},
          {"strategy", r.strategy ? ToJson(*r.strategy) : json(nullptr)},
          {"created_at", r.created_at},
          {"updated_at", r.updated_at}};
}

RunRecord RunRecordFromJson(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.preset = j.at("preset").get<std::string>();
  r.dataset_ref = RefFrom(j, "dataset_ref");
  r.model_before_ref = RefFrom(j, "model_before_ref");
  r.model_after_ref = RefFrom(j, "model_after_ref");
  r.feedback_ref = RefFrom(j, "feedback_ref");
  r.metrics_ref = RefFrom(j, "metrics_ref");
  r.status = ParseRunStatus(j.at("status").get<std::string>());
  r.progress = j.at("progress").get<double>();
  r.message = j.at("message").get<std::string>();
  r.arch = ArchitectureFromJson(j.at("arch"));
  r.train_config = TrainConfigFromJson(j.at("train_config"));
  if (!j.at("strategy").is_null()) {
    r.strategy = StrategyConfigFromJson(j.at("strategy"));
  }
  r.created_at = j.at("created_at").get<std::string>();
  r.updated_at = j.at("updated_at").get<std::string>();
  return r;
}

}  // namespace serial

// --- public save/load -----------------------------------------------------

using serial::Guard;
using serial::LoadVersioned;
using serial::SaveJson;

void SaveDataset(const Dataset& ds, const std::string& path) {
  SaveJson(path, serial::ToJson(ds));
}

Dataset LoadDataset(const std::string& path) {
  const auto j = LoadVersioned(path, serial::kDatasetVersion);
  return Guard(path, [&] { return serial::DatasetFromJson(j); });
}

void SaveModel(const ConceptBottleneck& m, const std::string& path) {
  SaveJson(path, serial::ToJson(m));
}

ConceptBottleneck LoadModel(const std::string& path) {
  const auto j = LoadVersioned(path, serial::kModelVersion);
  return Guard(path, [&] { return serial::ModelFromJson(j); });
}

void SaveFeedback(const FeedbackSet& fb, const std::string& path) {
  SaveJson(path, serial::ToJson(fb), 2);
}

FeedbackSet LoadFeedback(const std::string& path) {
  const auto j = LoadVersioned(path, serial::kFeedbackVersion);
  return Guard(path, [&] { return serial::FeedbackFromJson(j); });
}

void SaveAux(const AuxLabels& aux, const std::string& path) {
  SaveJson(path, serial::ToJson(aux));
}

AuxLabels LoadAux(const std::string& path) {
  const auto j = LoadVersioned(path, serial::kAuxVersion);
  return Guard(path, [&] { return serial::AuxFromJson(j); });
}

void SaveWeights(const SampleWeights& w, const std::string& path) {
  SaveJson(path, serial::ToJson(w));
}

SampleWeights LoadWeights(const std::string& path) {
  const auto j = LoadVersioned(path, serial::kWeightsVersion);
  return Guard(path, [&] { return serial::WeightsFromJson(j); });
}

void SavePlan(const AugmentationPlan& p, const std::string& path) {
  SaveJson(path, serial::ToJson(p));
}

AugmentationPlan LoadPlan(const std::string& path) {
  const auto j = LoadVersioned(path, serial::kPlanVersion);
  return Guard(path, [&] { return serial::PlanFromJson(j); });
}

void SaveForgetSet(const ForgetSet& f, const std::string& path) {
  SaveJson(path, serial::ToJson(f));
}

ForgetSet LoadForgetSet(const std::string& path) {
  const auto j = LoadVersioned(path, serial::kForgetVersion);
  return Guard(path, [&] { return serial::ForgetSetFromJson(j); });
}

void SaveMetrics(const RunMetrics& m, const std::string& path) {
  SaveJson(path, serial::ToJson(m), 2);
}

RunMetrics LoadMetrics(const std::string& path) {
  const auto j = LoadVersioned(path, serial::kMetricsVersion);
  return Guard(path, [&] { return serial::RunMetricsFromJson(j); });
}

}  // namespace cbdebug
