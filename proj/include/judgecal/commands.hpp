#pragma once

// Command implementations behind the judgecal CLI. Each command takes a
// plain argument struct, writes its outputs atomically, and returns the JSON
// report it wrote. Every report embeds the argument struct as "config";
// replay() re-runs a report's config, which reproduces the same bytes.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "judgecal/activation_store.hpp"
#include "judgecal/calibration.hpp"
#include "judgecal/error.hpp"
#include "judgecal/io.hpp"
#include "judgecal/judge.hpp"
#include "judgecal/probe.hpp"
#include "judgecal/report.hpp"
#include "judgecal/selective.hpp"
#include "json.hpp"

namespace judgecal::cmd {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr double kDefaultTrainFraction = 0.8;
inline constexpr double kDefaultValFraction = 0.1;
inline constexpr std::size_t kDefaultVotes = 10;
inline constexpr double kDefaultTemperature = 0.7;

/// Outcome of a command: the report plus human-readable log lines.
struct Outcome {
  json report;
  std::vector<std::string> notes;
};

struct SplitArgs {
  bool resplit = false;
  double train_fraction = kDefaultTrainFraction;
  double val_fraction = kDefaultValFraction;
  SplitStrategy strategy = SplitStrategy::plain;
};

struct MetricArgs {
  int num_bins = kDefaultBins;
  std::vector<double> thresholds = default_thresholds();
};

struct TrainArgs {
  fs::path data;
  int layer = 0;
  LossSpec loss;
  TrainConfig train;
  SplitArgs split;
  MetricArgs metrics;
  fs::path out = "probe.json";
  fs::path report = "train_report.json";
};

struct SweepArgs {
  fs::path data;
  std::vector<int> layers;  // empty means every layer in the dataset
  LossSpec loss;
  TrainConfig train;
  SplitArgs split;
  MetricArgs metrics;
  SelectionMetric select = SelectionMetric::val_brier;
  unsigned threads = 1;
  fs::path out = "probe.json";
  fs::path csv = "sweep.csv";
  fs::path report = "sweep_report.json";
};

struct EvalArgs {
  std::optional<fs::path> probe;
  std::optional<fs::path> data;
  std::optional<fs::path> scores;  // bypasses the probe when set
  std::string split = "test";      // train | val | test | all
  SplitArgs resplit;               // applied only when the dataset has no splits
  std::uint64_t seed = 0;
  MetricArgs metrics;
  fs::path report = "eval_report.json";
  std::optional<fs::path> svg;
  std::optional<fs::path> scores_out;
};

struct MetricsArgs {
  fs::path scores;
  std::optional<std::string> source;
  MetricArgs metrics;
  fs::path report = "metrics_report.json";
  std::optional<fs::path> svg;
};

enum class BaselineMethod { verbalized, consistency, majority, maxprob, perplexity, entropy };

struct BaselineArgs {
  fs::path transcripts;
  std::optional<fs::path> labels;  // JSONL of {example_id, ground_truth}
  std::optional<fs::path> data;    // or a dataset whose examples carry ground_truth
  BaselineMethod method = BaselineMethod::majority;
  std::size_t n = kDefaultVotes;
  std::optional<double> temperature = kDefaultTemperature;  // nullopt: any temperature
  std::vector<std::size_t> sweep_n;
  std::vector<double> sweep_temperature;
  MetricArgs metrics;
  fs::path report = "baseline_report.json";
  std::optional<fs::path> scores_out;
  std::optional<fs::path> enriched_out;
  std::optional<fs::path> svg;
};

// ---------------------------------------------------------------------------
// Enum names

inline std::string_view to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::verbalized: return "verbalized";
    case BaselineMethod::consistency: return "consistency";
    case BaselineMethod::majority: return "majority";
    case BaselineMethod::maxprob: return "maxprob";
    case BaselineMethod::perplexity: return "perplexity";
    case BaselineMethod::entropy: return "entropy";
  }
  return "majority";
}

inline BaselineMethod parse_baseline_method(std::string_view s) {
  for (auto m : {BaselineMethod::verbalized, BaselineMethod::consistency, BaselineMethod::majority,
                 BaselineMethod::maxprob, BaselineMethod::perplexity, BaselineMethod::entropy}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorCode::invalid_argument, "unknown baseline method '" + std::string(s) + "'");
}

inline std::string_view to_string(SplitStrategy s) {
  return s == SplitStrategy::stratified_by_subset ? "stratified_by_subset" : "plain";
}

inline SplitStrategy parse_split_strategy(std::string_view s) {
  if (s == "plain") return SplitStrategy::plain;
  if (s == "stratified_by_subset") return SplitStrategy::stratified_by_subset;
  throw Error(ErrorCode::invalid_argument, "unknown split strategy '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// RunConfig (de)serialization

namespace detail {

inline json opt_path(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

inline std::optional<fs::path> get_opt_path(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return fs::path(j.at(key).get<std::string>());
}

inline json to_json(const SplitArgs& s) {
  return json{{"resplit", s.resplit},
              {"train_fraction", s.train_fraction},
              {"val_fraction", s.val_fraction},
              {"strategy", to_string(s.strategy)}};
}

inline SplitArgs split_args_from_json(const json& j) {
  return SplitArgs{j.at("resplit").get<bool>(), j.at("train_fraction").get<double>(),
                   j.at("val_fraction").get<double>(), parse_split_strategy(j.at("strategy").get<std::string>())};
}

inline json to_json(const MetricArgs& m) {
  return json{{"num_bins", m.num_bins}, {"thresholds", m.thresholds}};
}

inline MetricArgs metric_args_from_json(const json& j) {
  return MetricArgs{j.at("num_bins").get<int>(), j.at("thresholds").get<std::vector<double>>()};
}

}  // namespace detail

inline json to_json(const TrainArgs& a) {
  return json{{"command", "train"},
              {"data", a.data.string()},
              {"layer", a.layer},
              {"loss_spec", judgecal::to_json(a.loss)},
              {"train_config", judgecal::to_json(a.train)},
              {"split", detail::to_json(a.split)},
              {"metrics", detail::to_json(a.metrics)},
              {"out", a.out.string()},
              {"report", a.report.string()}};
}

inline TrainArgs train_args_from_json(const json& j) {
  TrainArgs a;
  a.data = j.at("data").get<std::string>();
  a.layer = j.at("layer").get<int>();
  a.loss = loss_spec_from_json(j.at("loss_spec"));
  a.train = train_config_from_json(j.at("train_config"));
  a.split = detail::split_args_from_json(j.at("split"));
  a.metrics = detail::metric_args_from_json(j.at("metrics"));
  a.out = j.at("out").get<std::string>();
  a.report = j.at("report").get<std::string>();
  return a;
}

inline json to_json(const SweepArgs& a) {
  return json{{"command", "sweep"},
              {"data", a.data.string()},
              {"layers", a.layers},
              {"loss_spec", judgecal::to_json(a.loss)},
              {"train_config", judgecal::to_json(a.train)},
              {"split", detail::to_json(a.split)},
              {"metrics", detail::to_json(a.metrics)},
              {"select", judgecal::to_string(a.select)},
              {"out", a.out.string()},
              {"csv", a.csv.string()},
              {"report", a.report.string()}};
}

inline SweepArgs sweep_args_from_json(const json& j) {
  SweepArgs a;
  a.data = j.at("data").get<std::string>();
  a.layers = j.at("layers").get<std::vector<int>>();
  a.loss = loss_spec_from_json(j.at("loss_spec"));
  a.train = train_config_from_json(j.at("train_config"));
  a.split = detail::split_args_from_json(j.at("split"));
  a.metrics = detail::metric_args_from_json(j.at("metrics"));
  a.select = parse_selection_metric(j.at("select").get<std::string>());
  a.out = j.at("out").get<std::string>();
  a.csv = j.at("csv").get<std::string>();
  a.report = j.at("report").get<std::string>();
  return a;
}

inline json to_json(const EvalArgs& a) {
  return json{{"command", "eval"},
              {"probe", detail::opt_path(a.probe)},
              {"data", detail::opt_path(a.data)},
              {"scores", detail::opt_path(a.scores)},
              {"split", a.split},
              {"resplit", detail::to_json(a.resplit)},
              {"seed", a.seed},
              {"metrics", detail::to_json(a.metrics)},
              {"report", a.report.string()},
              {"svg", detail::opt_path(a.svg)},
              {"scores_out", detail::opt_path(a.scores_out)}};
}

inline EvalArgs eval_args_from_json(const json& j) {
  EvalArgs a;
  a.probe = detail::get_opt_path(j, "probe");
  a.data = detail::get_opt_path(j, "data");
  a.scores = detail::get_opt_path(j, "scores");
  a.split = j.at("split").get<std::string>();
  a.resplit = detail::split_args_from_json(j.at("resplit"));
  a.seed = j.at("seed").get<std::uint64_t>();
  a.metrics = detail::metric_args_from_json(j.at("metrics"));
  a.report = j.at("report").get<std::string>();
  a.svg = detail::get_opt_path(j, "svg");
  a.scores_out = detail::get_opt_path(j, "scores_out");
  return a;
}

inline json to_json(const MetricsArgs& a) {
  return json{{"command", "metrics"},
              {"scores", a.scores.string()},
              {"source", a.source ? json(*a.source) : json(nullptr)},
              {"metrics", detail::to_json(a.metrics)},
              {"report", a.report.string()},
              {"svg", detail::opt_path(a.svg)}};
}

inline MetricsArgs metrics_args_from_json(const json& j) {
  MetricsArgs a;
  a.scores = j.at("scores").get<std::string>();
  if (!j.at("source").is_null()) a.source = j.at("source").get<std::string>();
  a.metrics = detail::metric_args_from_json(j.at("metrics"));
  a.report = j.at("report").get<std::string>();
  a.svg = detail::get_opt_path(j, "svg");
  return a;
}

inline json to_json(const BaselineArgs& a) {
  return json{{"command", "baseline"},
              {"transcripts", a.transcripts.string()},
              {"labels", detail::opt_path(a.labels)},
              {"data", detail::opt_path(a.data)},
              {"method", to_string(a.method)},
              {"n", a.n},
              {"temperature", a.temperature ? json(*a.temperature) : json(nullptr)},
              {"sweep_n", a.sweep_n},
              {"sweep_temperature", a.sweep_temperature},
              {"metrics", detail::to_json(a.metrics)},
              {"report", a.report.string()},
              {"scores_out", detail::opt_path(a.scores_out)},
              {"enriched_out", detail::opt_path(a.enriched_out)},
              {"svg", detail::opt_path(a.svg)}};
}

inline BaselineArgs baseline_args_from_json(const json& j) {
  BaselineArgs a;
  a.transcripts = j.at("transcripts").get<std::string>();
  a.labels = detail::get_opt_path(j, "labels");
  a.data = detail::get_opt_path(j, "data");
  a.method = parse_baseline_method(j.at("method").get<std::string>());
  a.n = j.at("n").get<std::size_t>();
  if (!j.at("temperature").is_null()) a.temperature = j.at("temperature").get<double>();
  else a.temperature.reset();
  a.sweep_n = j.at("sweep_n").get<std::vector<std::size_t>>();
  a.sweep_temperature = j.at("sweep_temperature").get<std::vector<double>>();
  a.metrics = detail::metric_args_from_json(j.at("metrics"));
  a.report = j.at("report").get<std::string>();
  a.scores_out = detail::get_opt_path(j, "scores_out");
  a.enriched_out = detail::get_opt_path(j, "enriched_out");
  a.svg = detail::get_opt_path(j, "svg");
  return a;
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace detail {

inline std::string dump_report(const json& report) { return report.dump(2) + "\n"; }

/// Loads the dataset and assigns splits when asked to, or when none exist.
inline ActivationDataset load_with_splits(const fs::path& dir, const SplitArgs& split, std::uint64_t seed,
                                          std::vector<std::string>& notes, json& dataset_info) {
  ActivationDataset ds = read_dataset(dir);
  const bool has_splits = std::any_of(ds.examples.begin(), ds.examples.end(),
                                      [](const ExampleMeta& e) { return e.split != Split::unassigned; });
  const bool assign = split.resplit || !has_splits;
  if (assign) {
    ds.examples = assign_splits(std::move(ds.examples), split.train_fraction, split.val_fraction, seed,
                                split.strategy);
    notes.push_back("assigned splits with seed " + std::to_string(seed) + " (" + kGeneratorName + ")");
  }
  const std::size_t unlabeled = ds.unlabeled_count();
  if (unlabeled > 0) notes.push_back(std::to_string(unlabeled) + " unlabeled examples excluded");
  dataset_info = json{{"dataset_name", ds.manifest.dataset_name},
                      {"model_name", ds.manifest.model_name},
                      {"fingerprint", manifest_fingerprint(ds.manifest)},
                      {"num_examples", ds.manifest.num_examples},
                      {"hidden_dim", ds.manifest.hidden_dim},
                      {"unlabeled_excluded", unlabeled},
                      {"splits_assigned", assign},
                      {"train_labeled", ds.labeled_rows(Split::train).size()},
                      {"val_labeled", ds.labeled_rows(Split::val).size()},
                      {"test_labeled", ds.labeled_rows(Split::test).size()}};
  if (assign) dataset_info["split_generator"] = kGeneratorName;
  return ds;
}

inline json report_or_null(const std::vector<PredictionRecord>& records, const std::string& source,
                           const MetricArgs& m) {
  if (records.empty()) return nullptr;
  return judgecal::to_json(make_report(records, source, m.num_bins, m.thresholds));
}

inline void validate(const MetricArgs& m) {
  judgecal::detail::require(m.num_bins >= 1, ErrorCode::invalid_argument, "num_bins must be >= 1");
  for (double t : m.thresholds) {
    judgecal::detail::require(t >= 0.0 && t <= 1.0, ErrorCode::invalid_argument, "threshold outside [0,1]");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train

inline Outcome run_train(const TrainArgs& args) {
  detail::validate(args.metrics);
  Outcome out;
  json dataset_info;
  const auto ds = detail::load_with_splits(args.data, args.split, args.train.seed, out.notes, dataset_info);
  const ProbeModel model = train_probe(ds, args.layer, args.loss, args.train);
  write_probe(model, args.out);

  json log = json::array();
  for (const auto& e : model.training_log) {
    log.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"val_loss", e.val_loss ? json(*e.val_loss) : json(nullptr)}});
  }
  out.report = json{{"command", "train"},
                    {"config", to_json(args)},
                    {"dataset", dataset_info},
                    {"probe", {{"layer", model.layer}, {"hidden_dim", model.hidden_dim()}, {"artifact", args.out.string()}}},
                    {"training_log", std::move(log)},
                    {"val", detail::report_or_null(predict_records(model, ds, Split::val), "probe", args.metrics)}};
  io::write_file_atomic(args.report, detail::dump_report(out.report));
  return out;
}

// ---------------------------------------------------------------------------
// sweep

inline Outcome run_sweep(const SweepArgs& args) {
  detail::validate(args.metrics);
  Outcome out;
  json dataset_info;
  const auto ds = detail::load_with_splits(args.data, args.split, args.train.seed, out.notes, dataset_info);
  const std::vector<int> layers = args.layers.empty() ? ds.manifest.layers : args.layers;
  const auto result = sweep_layers(ds, layers, args.loss, args.train, args.select, args.threads);
  write_probe(result.best, args.out);

  std::vector<std::pair<std::string, double>> rows;
  json table = json::array();
  for (const auto& s : result.per_layer) {
    rows.emplace_back(std::to_string(s.layer), s.val_metric);
    table.push_back({{"layer", s.layer}, {"val_metric", s.val_metric}});
  }
  io::write_file_atomic(args.csv, render_csv("layer,val_metric", rows));

  out.report = json{{"command", "sweep"},
                    {"config", to_json(args)},
                    {"dataset", dataset_info},
                    {"selection_metric", judgecal::to_string(args.select)},
                    {"best_layer", result.best.layer},
                    {"per_layer", std::move(table)},
                    {"val", detail::report_or_null(predict_records(result.best, ds, Split::val), "probe", args.metrics)}};
  io::write_file_atomic(args.report, detail::dump_report(out.report));
  return out;
}

// ---------------------------------------------------------------------------
// eval / metrics

namespace detail {

inline void write_calibration_outputs(Outcome& out, const CalibrationReport& report, const fs::path& report_path,
                                      const std::optional<fs::path>& svg) {
  io::write_file_atomic(report_path, dump_report(out.report));
  if (svg) io::write_file_atomic(*svg, render_reliability_svg(report, report.source));
}

}  // namespace detail

inline Outcome run_eval(const EvalArgs& args) {
  detail::validate(args.metrics);
  Outcome out;
  std::vector<PredictionRecord> records;
  json context;
  if (args.scores) {
    records = read_records(*args.scores);
    context = json{{"mode", "scores"}};
  } else {
    judgecal::detail::require(args.probe && args.data, ErrorCode::invalid_argument,
                    "eval needs --probe and --data, or --scores");
    const ProbeModel model = read_probe(*args.probe);
    json dataset_info;
    const auto ds = detail::load_with_splits(*args.data, args.resplit, args.seed, out.notes, dataset_info);
    judgecal::detail::require(model.hidden_dim() == ds.manifest.hidden_dim, ErrorCode::dimension_mismatch,
                    "hidden_dim mismatch: probe has " + std::to_string(model.hidden_dim()) + ", dataset has " +
                        std::to_string(ds.manifest.hidden_dim));
    std::optional<Split> split;
    if (args.split != "all") split = parse_split(args.split);
    records = predict_records(model, ds, split);
    const bool same = model.dataset_fingerprint == manifest_fingerprint(ds.manifest);
    if (!same) out.notes.push_back("probe was trained on a different dataset");
    context = json{{"mode", "probe"}, {"layer", model.layer}, {"dataset", dataset_info}, {"fingerprint_match", same}};
  }
  judgecal::detail::require(!records.empty(), ErrorCode::degenerate_input, "no labeled records to evaluate");
  const std::string source = args.scores ? records.front().source : "probe";
  const auto report = make_report(records, source, args.metrics.num_bins, args.metrics.thresholds);
  out.report = json{{"command", "eval"}, {"config", to_json(args)}, {"context", context}, {"report", judgecal::to_json(report)}};
  if (args.scores_out) io::write_file_atomic(*args.scores_out, records_to_jsonl(records));
  detail::write_calibration_outputs(out, report, args.report, args.svg);
  return out;
}

inline Outcome run_metrics(const MetricsArgs& args) {
  detail::validate(args.metrics);
  Outcome out;
  auto records = read_records(args.scores);
  if (args.source) {
    std::erase_if(records, [&](const PredictionRecord& r) { return r.source != *args.source; });
  }
  judgecal::detail::require(!records.empty(), ErrorCode::degenerate_input, "no records in " + args.scores.string());
  std::string source = args.source.value_or(records.front().source);
  if (!args.source && std::any_of(records.begin(), records.end(),
                                  [&](const PredictionRecord& r) { return r.source != source; })) {
    source = "mixed";
  }
  const auto report = make_report(records, source, args.metrics.num_bins, args.metrics.thresholds);
  out.report = json{{"command", "metrics"}, {"config", to_json(args)}, {"report", judgecal::to_json(report)}};
  detail::write_calibration_outputs(out, report, args.report, args.svg);
  return out;
}

// ---------------------------------------------------------------------------
// baseline

namespace detail {

struct ExampleSamples {
  std::string example_id;
  std::optional<JudgeTranscript> reference;  // sample_index 0
  std::vector<JudgeTranscript> votes;        // sample_index >= 1, by index
};

inline std::vector<ExampleSamples> group_by_example(const std::vector<JudgeTranscript>& transcripts) {
  std::vector<ExampleSamples> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& t : transcripts) {
    auto [it, inserted] = index.emplace(t.example_id, groups.size());
    if (inserted) groups.push_back({t.example_id, std::nullopt, {}});
    auto& g = groups[it->second];
    if (t.sample_index == 0) {
      if (!g.reference) g.reference = t;
    } else {
      g.votes.push_back(t);
    }
  }
  for (auto& g : groups) {
    std::stable_sort(g.votes.begin(), g.votes.end(), [](const JudgeTranscript& a, const JudgeTranscript& b) {
      return a.sample_index < b.sample_index;
    });
  }
  return groups;
}

inline std::map<std::string, Winner> load_ground_truth(const BaselineArgs& args) {
  std::map<std::string, Winner> truth;
  if (args.labels) {
    for (const auto& row : io::read_jsonl(*args.labels)) {
      truth[row.at("example_id").get<std::string>()] = parse_winner(row.at("ground_truth").get<std::string>());
    }
  }
  if (args.data) {
    for (const auto& e : read_dataset(*args.data).examples) {
      if (e.ground_truth) truth.emplace(e.id, *e.ground_truth);
    }
  }
  judgecal::detail::require(!truth.empty(), ErrorCode::invalid_argument,
          "baseline needs ground truth: pass --labels or a --data directory whose examples carry ground_truth");
  return truth;
}

struct BaselineScores {
  std::vector<PredictionRecord> records;
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> excluded;
  std::size_t short_examples = 0;  // fewer votes than requested
};

inline ScoreOrientation orientation_of(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::perplexity: return ScoreOrientation::reciprocal;
    case BaselineMethod::entropy: return ScoreOrientation::exp_negated;
    default: return ScoreOrientation::confidence;
  }
}

inline BaselineScores score_baseline(const std::vector<ExampleSamples>& groups,
                                     const std::map<std::string, Winner>& truth, BaselineMethod method,
                                     std::size_t n, std::optional<double> temperature) {
  BaselineScores out;
  const std::string source(to_string(method));
  auto exclude = [&](const std::string& reason) { ++out.excluded[reason]; };
  for (const auto& g : groups) {
    const auto t = truth.find(g.example_id);
    if (t == truth.end()) {
      exclude("no_ground_truth");
      continue;
    }
    const JudgeTranscript* ref = g.reference ? &*g.reference : nullptr;
    std::optional<PredictionRecord> record;
    switch (method) {
      case BaselineMethod::verbalized: {
        if (!ref) { exclude("no_reference"); break; }
        if (ref->parsed.status != ParseStatus::ok) { exclude(std::string(to_string(ref->parsed.status))); break; }
        record = PredictionRecord{*ref->parsed.verbalized_confidence, score_correctness(*ref->parsed.verdict, t->second), source};
        break;
      }
      case BaselineMethod::consistency:
      case BaselineMethod::majority: {
        std::vector<JudgeTranscript> votes;
        for (const auto& v : g.votes) {
          if (votes.size() == n) break;
          if (temperature && std::abs(v.temperature - *temperature) > 1e-9) continue;
          votes.push_back(v);
        }
        if (votes.size() < n) ++out.short_examples;
        const bool any = std::any_of(votes.begin(), votes.end(), [](const JudgeTranscript& v) { return v.has_verdict(); });
        if (!any) { exclude("no_parseable_votes"); break; }
        if (method == BaselineMethod::consistency) {
          if (!ref || !ref->has_verdict()) { exclude("no_reference_verdict"); break; }
          const auto c = consistency_confidence(votes, *ref->parsed.verdict);
          record = PredictionRecord{c.confidence, score_correctness(c.verdict, t->second), source};
        } else {
          const auto m = majority_confidence(votes);
          record = PredictionRecord{m.confidence, score_correctness(m.verdict, t->second), source};
        }
        break;
      }
      case BaselineMethod::maxprob:
      case BaselineMethod::perplexity:
      case BaselineMethod::entropy: {
        if (!ref || !ref->has_verdict()) { exclude("no_reference_verdict"); break; }
        if (!ref->token_logprobs || ref->token_logprobs->empty()) { exclude("no_token_logprobs"); break; }
        double confidence = 0.0;
        try {
          if (method == BaselineMethod::maxprob) confidence = max_prob_score(*ref->token_logprobs);
          else if (method == BaselineMethod::perplexity) confidence = 1.0 / perplexity_score(*ref->token_logprobs);
          else confidence = std::exp(-entropy_score(*ref->token_logprobs));
        } catch (const Error&) {
          exclude("invalid_token_logprobs");
          break;
        }
        record = PredictionRecord{confidence, score_correctness(*ref->parsed.verdict, t->second), source};
        break;
      }
    }
    if (record) {
      out.records.push_back(*record);
      out.ids.push_back(g.example_id);
    }
  }
  return out;
}

inline json summary_row(const BaselineScores& s, int num_bins) {
  json row{{"count", s.records.size()}, {"excluded", s.excluded}, {"short_examples", s.short_examples}};
  if (s.records.empty()) {
    row["ece"] = row["kuiper"] = row["brier"] = row["auroc"] = nullptr;
    return row;
  }
  const auto r = make_report(s.records, "", num_bins);
  row["ece"] = r.ece;
  row["kuiper"] = r.kuiper;
  row["brier"] = r.brier;
  row["auroc"] = judgecal::detail::optional_json(r.auroc);
  return row;
}

}  // namespace detail

inline Outcome run_baseline(const BaselineArgs& args) {
  detail::validate(args.metrics);
  judgecal::detail::require(args.n >= 1, ErrorCode::invalid_argument, "--n must be >= 1");
  Outcome out;
  const auto transcripts = read_transcripts(args.transcripts);
  const auto truth = detail::load_ground_truth(args);
  const auto groups = detail::group_by_example(transcripts);

  std::map<std::string, std::size_t> status_counts;
  for (const auto& t : transcripts) ++status_counts[std::string(to_string(t.parsed.status))];

  const auto main = detail::score_baseline(groups, truth, args.method, args.n, args.temperature);
  judgecal::detail::require(!main.records.empty(), ErrorCode::degenerate_input, "no parseable transcripts");
  for (const auto& [reason, count] : main.excluded) {
    out.notes.push_back(std::to_string(count) + " examples excluded: " + reason);
  }

  const auto report = make_report(main.records, std::string(to_string(args.method)), args.metrics.num_bins,
                                  args.metrics.thresholds);
  json sweep_n = json::array();
  for (std::size_t n : args.sweep_n) {
    auto row = detail::summary_row(detail::score_baseline(groups, truth, args.method, n, args.temperature),
                                   args.metrics.num_bins);
    row["n"] = n;
    sweep_n.push_back(std::move(row));
  }
  json sweep_t = json::array();
  for (double temp : args.sweep_temperature) {
    auto row = detail::summary_row(detail::score_baseline(groups, truth, args.method, args.n, temp),
                                   args.metrics.num_bins);
    row["temperature"] = temp;
    sweep_t.push_back(std::move(row));
  }

  out.report = json{{"command", "baseline"},
                    {"config", to_json(args)},
                    {"method", to_string(args.method)},
                    {"orientation", to_string(detail::orientation_of(args.method))},
                    {"consistency_reference", "sample_index 0"},
                    {"transcripts", transcripts.size()},
                    {"examples", groups.size()},
                    {"parse_status_counts", status_counts},
                    {"excluded", main.excluded},
                    {"short_examples", main.short_examples},
                    {"report", judgecal::to_json(report)},
                    {"sweep_n", std::move(sweep_n)},
                    {"sweep_temperature", std::move(sweep_t)}};

  if (args.scores_out) {
    std::string lines;
    for (std::size_t i = 0; i < main.records.size(); ++i) {
      auto j = judgecal::to_json(main.records[i]);
      j["example_id"] = main.ids[i];
      lines += j.dump() + "\n";
    }
    io::write_file_atomic(*args.scores_out, lines);
  }
  if (args.enriched_out) {
    std::vector<json> rows;
    for (const auto& t : transcripts) rows.push_back(to_enriched_json(t));
    io::write_file_atomic(*args.enriched_out, io::to_jsonl(rows));
  }
  detail::write_calibration_outputs(out, report, args.report, args.svg);
  return out;
}

// ---------------------------------------------------------------------------
// inspect

inline Outcome run_inspect(const fs::path& dir) {
  const auto ds = read_dataset(dir);
  std::map<std::string, std::size_t> splits;
  std::map<std::string, std::size_t> labels;
  std::map<std::string, std::size_t> subsets;
  for (const auto& e : ds.examples) {
    ++splits[std::string(to_string(e.split))];
    ++labels[e.label ? std::to_string(*e.label) : "unlabeled"];
    ++subsets[e.subset];
  }
  Outcome out;
  out.report = json{{"command", "inspect"},
                    {"manifest", judgecal::to_json(ds.manifest)},
                    {"fingerprint", manifest_fingerprint(ds.manifest)},
                    {"splits", splits},
                    {"labels", labels},
                    {"subsets", subsets},
                    {"valid", true}};
  return out;
}

// ---------------------------------------------------------------------------
// replay

/// Re-runs the command recorded in a report's "config".
inline Outcome replay(const json& report) {
  judgecal::detail::require(report.contains("config"), ErrorCode::format, "report has no embedded config");
  const json& c = report.at("config");
  const std::string command = c.at("command").get<std::string>();
  if (command == "train") return run_train(train_args_from_json(c));
  if (command == "sweep") return run_sweep(sweep_args_from_json(c));
  if (command == "eval") return run_eval(eval_args_from_json(c));
  if (command == "metrics") return run_metrics(metrics_args_from_json(c));
  if (command == "baseline") return run_baseline(baseline_args_from_json(c));
  throw Error(ErrorCode::format, "cannot replay command '" + command + "'");
}

}  // namespace judgecal::cmd
