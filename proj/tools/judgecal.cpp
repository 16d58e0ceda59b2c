// judgecal: train and evaluate calibrated confidence probes for LLM judges.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "judgecal/commands.hpp"

namespace {

using judgecal::Error;
using judgecal::ErrorCode;
namespace cmd = judgecal::cmd;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == ',') {
      if (!current.empty()) parts.push_back(current);
      current.clear();
    } else if (c != ' ') {
      current += c;
    }
  }
  if (!current.empty()) parts.push_back(current);
  return parts;
}

long long to_integer(const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw Error(ErrorCode::invalid_argument, "not an integer: '" + s + "'");
  return v;
}

double to_real(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw Error(ErrorCode::invalid_argument, "not a number: '" + s + "'");
  return v;
}

// "0-31", "5..30", "0,4,8" or mixtures of them.
std::vector<long long> parse_int_list(const std::string& text) {
  std::vector<long long> out;
  for (const auto& part : split_list(text)) {
    std::size_t sep = part.find("..");
    std::size_t width = 2;
    if (sep == std::string::npos) {
      sep = part.find('-', 1);
      width = 1;
    }
    if (sep == std::string::npos) {
      out.push_back(to_integer(part));
      continue;
    }
    const long long lo = to_integer(part.substr(0, sep));
    const long long hi = to_integer(part.substr(sep + width));
    if (hi < lo) throw Error(ErrorCode::invalid_argument, "empty range '" + part + "'");
    for (long long v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split_list(text)) out.push_back(to_real(part));
  return out;
}

void print_error(std::string_view code, std::string_view message) {
  nlohmann::json j{{"error", code}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

spdlog::level::level_enum log_level_from_env() {
  const char* env = std::getenv("JUDGECAL_LOG");
  if (env == nullptr) return spdlog::level::warn;
  const auto level = spdlog::level::from_str(env);
  return level;
}

struct Options {
  // shared
  std::string data;
  std::string loss = "brier";
  double alpha = 0.25;
  double gamma = 2.0;
  double lr = 1e-4;
  double wd = 0.01;
  std::size_t batch = 4;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::string optimizer = "adam_decoupled";
  bool resplit = false;
  double train_fraction = cmd::kDefaultTrainFraction;
  double val_fraction = cmd::kDefaultValFraction;
  std::string split_strategy = "plain";
  int num_bins = judgecal::kDefaultBins;
  std::string thresholds;
  std::string report;
  std::string out = "probe.json";
  std::string svg;
  // train
  int layer = 0;
  // sweep
  std::string layers;
  std::string select = "val_brier";
  std::string csv = "sweep.csv";
  unsigned threads = 1;
  // eval / metrics
  std::string probe;
  std::string scores;
  std::string split = "test";
  std::string scores_out;
  std::string source;
  // baseline
  std::string transcripts;
  std::string labels;
  std::string method = "majority";
  std::size_t n = cmd::kDefaultVotes;
  std::string temperature = "0.7";
  std::string sweep_n;
  std::string sweep_temperature;
  std::string enriched_out;
  // replay
  std::string replay_report;
};

std::optional<std::filesystem::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

judgecal::LossSpec loss_spec(const Options& o) {
  return judgecal::LossSpec{judgecal::parse_loss_kind(o.loss), o.alpha, o.gamma};
}

judgecal::TrainConfig train_config(const Options& o) {
  judgecal::TrainConfig c;
  c.learning_rate = o.lr;
  c.weight_decay = o.wd;
  c.batch_size = o.batch;
  c.epochs = o.epochs;
  c.seed = o.seed;
  c.optimizer = judgecal::parse_optimizer(o.optimizer);
  return c;
}

cmd::SplitArgs split_args(const Options& o) {
  return cmd::SplitArgs{o.resplit, o.train_fraction, o.val_fraction, cmd::parse_split_strategy(o.split_strategy)};
}

cmd::MetricArgs metric_args(const Options& o) {
  cmd::MetricArgs m;
  m.num_bins = o.num_bins;
  if (!o.thresholds.empty()) m.thresholds = parse_real_list(o.thresholds);
  return m;
}

void add_training_flags(CLI::App* sub, Options& o) {
  sub->add_option("--data", o.data, "Dataset directory")->required();
  sub->add_option("--loss", o.loss, "brier | focal | bce")->capture_default_str();
  sub->add_option("--alpha", o.alpha, "Focal alpha")->capture_default_str();
  sub->add_option("--gamma", o.gamma, "Focal gamma")->capture_default_str();
  sub->add_option("--lr", o.lr, "Learning rate")->capture_default_str();
  sub->add_option("--wd", o.wd, "Decoupled weight decay")->capture_default_str();
  sub->add_option("--batch", o.batch, "Mini-batch size")->capture_default_str();
  sub->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--optimizer", o.optimizer, "adam_decoupled | sgd")->capture_default_str();
  sub->add_option("--seed", o.seed, "Seed for shuffling and split assignment")->capture_default_str();
  sub->add_flag("--resplit", o.resplit, "Reassign train/val/test splits");
  sub->add_option("--train-fraction", o.train_fraction)->capture_default_str();
  sub->add_option("--val-fraction", o.val_fraction)->capture_default_str();
  sub->add_option("--split-strategy", o.split_strategy, "plain | stratified_by_subset")->capture_default_str();
}

void add_metric_flags(CLI::App* sub, Options& o) {
  sub->add_option("--bins", o.num_bins, "Reliability bins")->capture_default_str();
  sub->add_option("--thresholds", o.thresholds, "Comma-separated confidence thresholds");
}

void log_notes(const cmd::Outcome& outcome) {
  for (const auto& note : outcome.notes) spdlog::info("{}", note);
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_st("judgecal");
  spdlog::set_default_logger(logger);
  spdlog::set_level(log_level_from_env());

  CLI::App app{"Calibrated confidence probes and calibration metrics for LLM judges"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "Train a probe on one layer");
  add_training_flags(train, o);
  add_metric_flags(train, o);
  train->add_option("--layer", o.layer, "Layer to probe")->required();
  train->add_option("--out", o.out, "Probe artifact path")->capture_default_str();
  train->add_option("--report", o.report, "Training report path");

  auto* sweep = app.add_subcommand("sweep", "Train one probe per layer and keep the best on validation");
  add_training_flags(sweep, o);
  add_metric_flags(sweep, o);
  sweep->add_option("--layers", o.layers, "Layers, e.g. 0-31 or 4,8,16 (default: all)");
  sweep->add_option("--select", o.select, "val_brier | val_kuiper")->capture_default_str();
  sweep->add_option("--threads", o.threads, "Layers trained in parallel")->capture_default_str();
  sweep->add_option("--out", o.out, "Best probe artifact path")->capture_default_str();
  sweep->add_option("--csv", o.csv, "Per-layer CSV path")->capture_default_str();
  sweep->add_option("--report", o.report, "Sweep report path");

  auto* eval = app.add_subcommand("eval", "Calibration report for a probe on a dataset, or for a scores file");
  eval->add_option("--probe", o.probe, "Probe artifact");
  eval->add_option("--data", o.data, "Dataset directory");
  eval->add_option("--scores", o.scores, "Scores JSONL; bypasses the probe");
  eval->add_option("--split", o.split, "train | val | test | all")->capture_default_str();
  eval->add_option("--seed", o.seed, "Seed used if splits must be assigned")->capture_default_str();
  eval->add_option("--train-fraction", o.train_fraction)->capture_default_str();
  eval->add_option("--val-fraction", o.val_fraction)->capture_default_str();
  eval->add_option("--report", o.report, "Report path");
  eval->add_option("--svg", o.svg, "Reliability diagram path");
  eval->add_option("--scores-out", o.scores_out, "Write per-example scores JSONL");
  add_metric_flags(eval, o);

  auto* baseline = app.add_subcommand("baseline", "Verbalized, consistency and majority baselines from transcripts");
  baseline->add_option("--transcripts", o.transcripts, "Transcript JSONL")->required();
  baseline->add_option("--labels", o.labels, "Ground-truth JSONL {example_id, ground_truth}");
  baseline->add_option("--data", o.data, "Dataset whose examples carry ground_truth");
  baseline->add_option("--method", o.method,
                       "verbalized | consistency | majority | maxprob | perplexity | entropy")
      ->capture_default_str();
  baseline->add_option("--n", o.n, "Sampled generations per example")->capture_default_str();
  baseline->add_option("--temperature", o.temperature, "Sampling temperature of the votes, or 'any'")
      ->capture_default_str();
  baseline->add_option("--sweep-n", o.sweep_n, "Report rows for several N, e.g. 5,10,20,30 or 5..30");
  baseline->add_option("--sweep-temperature", o.sweep_temperature, "Report rows for several temperatures");
  baseline->add_option("--report", o.report, "Report path");
  baseline->add_option("--scores-out", o.scores_out, "Write per-example scores JSONL");
  baseline->add_option("--enriched-out", o.enriched_out, "Write transcripts with parse results");
  baseline->add_option("--svg", o.svg, "Reliability diagram path");
  add_metric_flags(baseline, o);

  auto* metrics = app.add_subcommand("metrics", "Calibration report for a scores JSONL");
  metrics->add_option("scores", o.scores, "Scores JSONL")->required();
  metrics->add_option("--source", o.source, "Only records with this source tag");
  metrics->add_option("--report", o.report, "Report path");
  metrics->add_option("--svg", o.svg, "Reliability diagram path");
  add_metric_flags(metrics, o);

  auto* inspect = app.add_subcommand("inspect", "Validate a dataset and print a summary");
  inspect->add_option("data", o.data, "Dataset directory")->required();

  auto* replay = app.add_subcommand("replay", "Re-run the command embedded in a report");
  replay->add_option("report", o.replay_report, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", e.what());
    return 2;
  }

  try {
    cmd::Outcome outcome;
    if (*train) {
      cmd::TrainArgs a;
      a.data = o.data;
      a.layer = o.layer;
      a.loss = loss_spec(o);
      a.train = train_config(o);
      a.split = split_args(o);
      a.metrics = metric_args(o);
      a.out = o.out;
      a.report = o.report.empty() ? "train_report.json" : o.report;
      outcome = cmd::run_train(a);
    } else if (*sweep) {
      cmd::SweepArgs a;
      a.data = o.data;
      for (long long v : parse_int_list(o.layers)) a.layers.push_back(static_cast<int>(v));
      a.loss = loss_spec(o);
      a.train = train_config(o);
      a.split = split_args(o);
      a.metrics = metric_args(o);
      a.select = judgecal::parse_selection_metric(o.select);
      a.threads = o.threads;
      a.out = o.out;
      a.csv = o.csv;
      a.report = o.report.empty() ? "sweep_report.json" : o.report;
      outcome = cmd::run_sweep(a);
    } else if (*eval) {
      cmd::EvalArgs a;
      a.probe = opt_path(o.probe);
      a.data = opt_path(o.data);
      a.scores = opt_path(o.scores);
      a.split = o.split;
      a.resplit = split_args(o);
      a.seed = o.seed;
      a.metrics = metric_args(o);
      a.report = o.report.empty() ? "eval_report.json" : o.report;
      a.svg = opt_path(o.svg);
      a.scores_out = opt_path(o.scores_out);
      outcome = cmd::run_eval(a);
    } else if (*baseline) {
      cmd::BaselineArgs a;
      a.transcripts = o.transcripts;
      a.labels = opt_path(o.labels);
      a.data = opt_path(o.data);
      a.method = cmd::parse_baseline_method(o.method);
      a.n = o.n;
      if (o.temperature == "any") a.temperature.reset();
      else a.temperature = to_real(o.temperature);
      for (long long v : parse_int_list(o.sweep_n)) {
        if (v < 1) throw Error(ErrorCode::invalid_argument, "--sweep-n values must be >= 1");
        a.sweep_n.push_back(static_cast<std::size_t>(v));
      }
      a.sweep_temperature = parse_real_list(o.sweep_temperature);
      a.metrics = metric_args(o);
      a.report = o.report.empty() ? "baseline_report.json" : o.report;
      a.scores_out = opt_path(o.scores_out);
      a.enriched_out = opt_path(o.enriched_out);
      a.svg = opt_path(o.svg);
      outcome = cmd::run_baseline(a);
    } else if (*metrics) {
      cmd::MetricsArgs a;
      a.scores = o.scores;
      if (!o.source.empty()) a.source = o.source;
      a.metrics = metric_args(o);
      a.report = o.report.empty() ? "metrics_report.json" : o.report;
      a.svg = opt_path(o.svg);
      outcome = cmd::run_metrics(a);
    } else if (*inspect) {
      outcome = cmd::run_inspect(o.data);
      std::cout << outcome.report.dump(2) << '\n';
    } else if (*replay) {
      const auto report = nlohmann::json::parse(judgecal::io::read_file(o.replay_report));
      outcome = cmd::replay(report);
    }
    log_notes(outcome);
  } catch (const Error& e) {
    print_error(judgecal::to_string(e.code()), e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    print_error(judgecal::to_string(ErrorCode::format), e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
