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

#include "cli.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cbdebug/error.h"
#include "cbdebug/feedback.h"
#include "cbdebug/io.h"
#include "cbdebug/retrain.h"
#include "cbdebug/run_store.h"
#include "cbdebug/service.h"

namespace cbdebug::cli {
namespace {

std::string Fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string DefaultRunsDir() {
  const char* env = std::getenv("CBDEBUG_RUNS_DIR");
  return env && *env ? env : "runs";
}

std::string ResolveRun(const RunStore& store, const std::string& run) {
  if (!run.empty()) {
    if (!store.Exists(run)) throw NotFoundError("no such run '" + run + "'");
    return run;
  }
  auto latest = store.Latest();
  if (!latest) throw ValidationError("no runs found under " + store.root());
  return *latest;
}

// "1,4 7" -> {1, 4, 7}
std::set<int> ParseIds(const std::string& text) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::set<int> ids;
  std::string tok;
  while (in >> tok) {
    size_t pos = 0;
    int id = 0;
    try {
      id = std::stoi(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size()) {
      throw ValidationError("not a concept id: '" + tok + "'");
    }
    ids.insert(id);
  }
  return ids;
}

void PrintMetrics(std::ostream& out, const char* label, const GroupMetrics& m) {
  out << label << ": average " << Fixed(m.sample_average) << "  worst-group "
      << Fixed(m.worst_group) << "  group-mean " << Fixed(m.group_mean);
  if (m.auroc) out << "  auroc " << Fixed(*m.auroc);
  out << "\n";
  for (const auto& [key, acc] : m.accuracy) {
    out << "  (y=" << key.first << ", a=" << key.second << ") n=" << m.n.at(key)
        << "  acc " << Fixed(acc) << "\n";
  }
}

void PrintFeedback(std::ostream& out, const FeedbackSet& fb) {
  out << "feedback (" << FeedbackSourceName(fb.source) << "): c_spur = {";
  bool first = true;
  for (int c : fb.c_spur) {
    out << (first ? "" : ", ") << c;
    first = false;
  }
  out << "}\n";
  for (const auto& [id, v] : fb.verdicts) {
    out << "  concept " << id << ": " << VerdictName(v.verdict);
    if (!v.justification.empty()) out << "  (" << v.justification << ")";
    out << "\n";
  }
}

// Opening the store also settles jobs whose process died.
RunStore OpenStore(const std::string& dir) {
  RunStore store(dir);
  store.RecoverInterrupted();
  return store;
}

struct Options {
  std::string runs_dir = DefaultRunsDir();
  std::string run;

  // gen
  std::string preset = "waterbirds";
  uint64_t seed = 0;
  std::string run_id;
  int epochs = 0;
  bool and_train = false;

  // explain / debug
  int k = 10;
  std::string oracle;
  std::string mark;
  bool mark_set = false;
  double threshold = 0.5;
  std::string task = "waterbirds";

  // retrain
  std::string strategy;
  StrategyConfig strat;
  std::string aug_mode = "cutmix";

  // compare / hist
  std::vector<std::string> runs;
  bool csv = false;
  int bins = 20;
  bool plan = false;

  // serve
  ServiceConfig serve = ServiceConfig::FromEnv();
};

int CmdGen(const Options& o, std::ostream& out) {
  const RunStore store = OpenStore(o.runs_dir);
  CreateRunOptions opts = DefaultRunOptions(o.preset, o.seed);
  opts.run_id = o.run_id;
  if (o.epochs > 0) opts.train.epochs = o.epochs;
  RunRecord r = CreateRun(store, opts);
  out << r.run_id << "\n";
  if (o.and_train) r = TrainRun(store, r.run_id);
  return kExitOk;
}

int CmdTrain(const Options& o, std::ostream& out) {
  const RunStore store = OpenStore(o.runs_dir);
  const std::string id = ResolveRun(store, o.run);
  const RunRecord r = TrainRun(store, id);
  out << "run " << id << ": " << RunStatusName(r.status) << "\n";
  PrintMetrics(out, "test", LoadMetrics(store.Path(id, r.metrics_ref)).before);
  return kExitOk;
}

int CmdExplain(const Options& o, std::ostream& out) {
  const RunStore store = OpenStore(o.runs_dir);
  const std::string id = ResolveRun(store, o.run);
  const RunRecord r = store.Get(id);
  const Dataset ds = LoadDataset(store.Path(id, r.dataset_ref));
  for (const ConceptInfo& c : ListConcepts(store, id, o.k)) {
    out << "concept " << c.concept_id << "  " << c.name
        << (c.active ? "" : "  [removed]") << "\n  head:";
    for (double w : c.head_weights) out << " " << Fixed(w);
    out << "\n  background share "
        << Fixed(BackgroundShare(c.explanation, ds.segment_roles)) << "\n";
    out << "  top exemplars:";
    for (const auto& [sample, act] : c.explanation.top_exemplars) {
      out << " " << sample << "(" << Fixed(act, 3) << ")";
    }
    out << "\n";
  }
  return kExitOk;
}

int CmdDebug(const Options& o, std::ostream& out, std::ostream& err,
             std::istream& in) {
  const RunStore store = OpenStore(o.runs_dir);
  const std::string id = ResolveRun(store, o.run);
  FeedbackSet fb;
  if (o.oracle == "rule") {
    fb = RunRuleOracle(store, id, o.threshold);
  } else if (o.oracle == "llm") {
    const LlmEndpointConfig endpoint = LlmEndpointConfig::FromEnv();
    if (endpoint.base_url.empty()) {
      throw PreconditionError("CBDEBUG_LLM_URL is not set");
    }
    std::vector<std::string> warnings;
    fb = RunLlmOracle(store, id, TaskDescription(o.task), endpoint, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
  } else if (!o.oracle.empty()) {
    throw ValidationError("--oracle must be rule or llm");
  } else if (o.mark_set) {
    fb = SubmitFeedback(store, id, ParseIds(o.mark), FeedbackSource::kHuman);
  } else {
    const RunRecord r = store.Get(id);
    if (r.model_before_ref.empty()) {
      throw PreconditionError("run " + id + " has no trained model");
    }
    const ConceptBottleneck model =
        LoadModel(store.Path(id, r.model_before_ref));
    const Dataset ds = LoadDataset(store.Path(id, r.dataset_ref));
    const std::vector<int> shown = PresentedConcepts(model);
    const auto expl = ExplainConcepts(model, ds, shown, o.k);
    out << "concepts the model relies on:\n";
    for (size_t i = 0; i < shown.size(); ++i) {
      out << "  [" << shown[i] << "] " << model.concept_meta[shown[i]].name
          << "  background share "
          << Fixed(BackgroundShare(expl[i], ds.segment_roles)) << "\n";
    }
    out << "spurious concept ids (comma/space separated, empty for none): "
        << std::flush;
    std::string line;
    std::getline(in, line);
    fb = SubmitFeedback(store, id, ParseIds(line), FeedbackSource::kHuman);
  }
  PrintFeedback(out, fb);
  return kExitOk;
}

int CmdRetrain(Options o, std::ostream& out) {
  const RunStore store = OpenStore(o.runs_dir);
  const std::string id = ResolveRun(store, o.run);
  o.strat.strategy = ParseStrategy(o.strategy);
  o.strat.augment.mode = ParseAugmentMode(o.aug_mode);
  const RunRecord r = RetrainRun(store, id, o.strat);
  const RunMetrics m = LoadMetrics(store.Path(id, r.metrics_ref));
  out << "run " << id << ": " << StrategyName(o.strat.strategy) << " "
      << RunStatusName(r.status) << "\n";
  PrintMetrics(out, "before", m.before);
  if (m.after) PrintMetrics(out, "after", *m.after);
  return kExitOk;
}

int CmdEval(const Options& o, std::ostream& out) {
  const RunStore store = OpenStore(o.runs_dir);
  const std::string id = ResolveRun(store, o.run);
  const RunMetrics m = EvaluateRun(store, id);
  out << "run " << id << " -> " << store.Path(id, files::kMetrics) << "\n";
  PrintMetrics(out, "before", m.before);
  if (m.after) PrintMetrics(out, "after", *m.after);
  if (m.concept_report) {
    for (const auto& cls : m.concept_report->classes) {
      out << "class " << cls.cls << " top concepts: before";
      for (const auto& c : cls.before) {
        out << " " << c.concept_id << (c.changed ? "-" : "");
      }
      out << " | after";
      for (const auto& c : cls.after) {
        out << " " << c.concept_id << (c.changed ? "+" : "");
      }
      out << "\n";
    }
  }
  return kExitOk;
}

int CmdCompare(const Options& o, std::ostream& out) {
  const RunStore store = OpenStore(o.runs_dir);
  std::vector<CompareRow> rows;
  for (const auto& run : o.runs) {
    const RunRecord r = store.Get(run);
    if (r.metrics_ref.empty()) {
      throw PreconditionError("run " + run + " has no metrics; run eval");
    }
    const RunMetrics m = LoadMetrics(store.Path(run, r.metrics_ref));
    rows.push_back({run, "before", m.before});
    if (m.after) rows.push_back({run, "after", *m.after});
  }
  out << (o.csv ? CompareTableCsv(rows) : CompareTableText(rows));
  return kExitOk;
}

int CmdHist(const Options& o, std::ostream& out) {
  const RunStore store = OpenStore(o.runs_dir);
  const std::string id = ResolveRun(store, o.run);
  if (o.plan) {
    const std::string path = store.Path(id, files::kPlan);
    if (!FileExists(path)) {
      throw NotFoundError("run " + id + " has no augmentation plan");
    }
    out << AugHistogramCsv(LoadPlan(path).p_aug, o.bins);
    return kExitOk;
  }
  const Histogram h = WeightHistogram(store, id, o.bins);
  out << (o.csv ? h.ToCsv() : h.ToText());
  return kExitOk;
}

int CmdServe(Options o, std::ostream& out) {
  o.serve.runs_dir = o.runs_dir;
  Service service(o.serve);
  const int port = service.Start();
  out << "serving " << o.serve.runs_dir << " on http://" << o.serve.host
      << ":" << port << "\n"
      << std::flush;
  service.Run();
  return kExitOk;
}

}  // namespace

int Main(const std::vector<std::string>& args, std::ostream& out,
         std::ostream& err, std::istream& in) {
  CLI::App app{"cbdebug: concept-bottleneck debugging workbench", "cbdebug"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--runs-dir", o.runs_dir,
                 "Runs directory (default $CBDEBUG_RUNS_DIR or ./runs)");

  auto add_run = [&o](CLI::App* sub) {
    sub->add_option("--run", o.run, "Run id (default: most recent run)");
  };

  auto* gen = app.add_subcommand("gen", "Generate a planted dataset as a new run");
  gen->add_option("--preset", o.preset, "waterbirds | balanced | independent");
  gen->add_option("--seed", o.seed, "Dataset and training seed");
  gen->add_option("--run-id", o.run_id, "Explicit run id");
  gen->add_option("--epochs", o.epochs, "Training epochs")
      ->check(CLI::PositiveNumber);
  gen->add_flag("--train", o.and_train, "Train right away");

  auto* train = app.add_subcommand("train", "Train the concept bottleneck model");
  add_run(train);

  auto* explain = app.add_subcommand("explain", "Show concepts and exemplars");
  add_run(explain);
  explain->add_option("-k,--top", o.k, "Exemplars per concept")
      ->check(CLI::NonNegativeNumber);

  auto* debug = app.add_subcommand(
      "debug", "Record spurious concepts (interactive, --mark or --oracle)");
  add_run(debug);
  debug->add_option("--oracle", o.oracle, "rule | llm")
      ->check(CLI::IsMember({"rule", "llm"}));
  debug->add_option("--mark", o.mark, "Spurious concept ids, e.g. 1,4,7")
      ->each([&o](const std::string&) { o.mark_set = true; });
  debug->add_option("--threshold", o.threshold, "Rule oracle background share");
  debug->add_option("--task", o.task, "LLM task: waterbirds|metashift|celeba");
  debug->add_option("-k,--top", o.k, "Exemplars per concept");

  auto* retrain = app.add_subcommand("retrain", "Retrain with a strategy");
  add_run(retrain);
  retrain->add_option("--strategy", o.strategy,
                      "remove|retrain|protopdebug|reweight_only|augment_only|"
                      "cbdebug|jtt|lff")
      ->required();
  retrain->add_option("--epochs", o.strat.retrain_epochs,
                      "Fine-tune epochs (0: half the original)");
  retrain->add_option("--seed", o.strat.seed, "Strategy seed");
  retrain->add_flag("--freeze-extractor", o.strat.freeze_extractor,
                    "Update the head only");
  retrain->add_option("--k-folds", o.strat.permweight.k_folds, "Weighting folds");
  retrain->add_option("--permutations", o.strat.permweight.n_permutations,
                      "Weighting permutations");
  retrain->add_option("--gamma", o.strat.augment.gamma, "p_aug contrast");
  retrain->add_option("--mode", o.aug_mode, "cutmix | mixup");
  retrain->add_option("--k-paste", o.strat.augment.k_paste, "Segments pasted");
  retrain->add_option("--lambda-forget", o.strat.protopdebug.lambda_forget,
                      "ProtoPDebug forgetting weight");
  retrain->add_option("--jtt-epochs", o.strat.jtt.T, "JTT identification epochs");
  retrain->add_option("--jtt-upweight", o.strat.jtt.lambda_up, "JTT upweight");
  retrain->add_option("--lff-q", o.strat.lff.q, "LfF GCE exponent");

  auto* eval = app.add_subcommand("eval", "Recompute metrics.json");
  add_run(eval);

  auto* compare = app.add_subcommand("compare", "Tabulate metrics across runs");
  compare->add_option("runs", o.runs, "Run ids")->required();
  compare->add_flag("--csv", o.csv, "CSV output");

  auto* hist = app.add_subcommand("hist", "Weight (or p_aug) histogram");
  add_run(hist);
  hist->add_option("--bins", o.bins, "Bins")->check(CLI::PositiveNumber);
  hist->add_flag("--csv", o.csv, "CSV output");
  hist->add_flag("--plan", o.plan, "p_aug histogram from the plan (CSV)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--host", o.serve.host, "Bind address");
  serve->add_option("--port", o.serve.port, "Port (0: any free port)");
  serve->add_option("--workers", o.serve.workers, "Concurrent jobs")
      ->check(CLI::PositiveNumber);
  serve->add_option("--static", o.serve.static_dir, "Web UI bundle to serve");

  // CLI11 consumes a reversed argument vector.
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitValidation;
  }
  if (hist->parsed() && o.plan && o.bins == 20) o.bins = 100;

  try {
    if (gen->parsed()) return CmdGen(o, out);
    if (train->parsed()) return CmdTrain(o, out);
    if (explain->parsed()) return CmdExplain(o, out);
    if (debug->parsed()) return CmdDebug(o, out, err, in);
    if (retrain->parsed()) return CmdRetrain(o, out);
    if (eval->parsed()) return CmdEval(o, out);
    if (compare->parsed()) return CmdCompare(o, out);
    if (hist->parsed()) return CmdHist(o, out);
    if (serve->parsed()) return CmdServe(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace cbdebug::cli
