#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "judgecal/commands.hpp"
#include "test_support.hpp"

namespace judgecal {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::scratch_dir(std::string("cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  RunResult run(const std::string& args, const std::string& env = "") const {
    const std::string command = env + " " + JUDGECAL_BIN + " " + args + " >" + p("stdout.txt") + " 2>" + p("stderr.txt");
    const int status = std::system(command.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = io::read_file(p("stdout.txt"));
    r.err = io::read_file(p("stderr.txt"));
    return r;
  }

  void write_data(const std::string& name, std::size_t n, int layers, int signal, std::size_t dim = 6) const {
    auto data = testing::make_logistic_data(n, dim, 23, 0.75, layers, signal);
    write_dataset(data.dataset, dir_ / name);
  }

  fs::path dir_;
};

json single_error_line(const std::string& err) {
  EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1) << err;
  return json::parse(err);
}

TEST_F(CliTest, MissingDatasetExitsTwo) {
  const auto r = run("train --data " + p("nowhere") + " --layer 16 --loss brier --out " + p("probe.json"));
  EXPECT_EQ(r.exit_code, 2);
  const auto e = single_error_line(r.err);
  EXPECT_EQ(e["error"], "not_found");
  EXPECT_NE(e["message"].get<std::string>().find("dataset not found"), std::string::npos);
  EXPECT_FALSE(fs::exists(p("probe.json")));
}

TEST_F(CliTest, UsageErrorsAreMachineReadable) {
  auto r = run("train --layer 1");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(single_error_line(r.err)["error"], "usage");
  r = run("frobnicate");
  EXPECT_EQ(r.exit_code, 2);
  write_data("d", 50, 1, 0);
  r = run("train --data " + p("d") + " --layer 0 --loss hinge");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(single_error_line(r.err)["error"], "invalid_argument");
  io::write_file_atomic(p("broken.json"), "{not json");
  r = run("replay " + p("broken.json"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(single_error_line(r.err)["error"], "format");
}

TEST_F(CliTest, TrainHappyPathAndFocalFlags) {
  write_data("d", 300, 17, 16, 4);
  auto r = run("train --data " + p("d") + " --layer 16 --loss brier --epochs 2 --out " + p("probe.json") +
               " --report " + p("train.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(r.err.empty());
  EXPECT_EQ(read_probe(p("probe.json")).layer, 16);
  const auto report = json::parse(io::read_file(p("train.json")));
  for (const char* key : {"brier", "ece", "kuiper"}) EXPECT_TRUE(report["val"].contains(key));

  r = run("train --data " + p("d") + " --layer 16 --loss focal --alpha 0.75 --gamma 20 --epochs 1 --out " +
          p("focal.json") + " --report " + p("focal_report.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto probe = read_probe(p("focal.json"));
  EXPECT_EQ(probe.loss_spec.kind, LossKind::focal);
  EXPECT_EQ(probe.loss_spec.alpha, 0.75);
  EXPECT_EQ(probe.loss_spec.gamma, 20.0);
}

TEST_F(CliTest, LogLevelFromEnvironment) {
  write_data("d", 100, 1, 0);
  io::write_file_atomic(p("d") + "/examples.jsonl", [&] {
    auto rows = io::read_jsonl(p("d") + "/examples.jsonl");
    rows[0]["label"] = nullptr;
    return io::to_jsonl(rows);
  }());
  const std::string args = "train --data " + p("d") + " --layer 0 --epochs 1 --out " + p("a.json") + " --report " + p("r.json");
  EXPECT_TRUE(run(args).err.empty());
  const auto verbose = run(args, "JUDGECAL_LOG=info");
  EXPECT_EQ(verbose.exit_code, 0);
  EXPECT_NE(verbose.err.find("1 unlabeled examples excluded"), std::string::npos);
}

TEST_F(CliTest, SweepAllThirtyTwoLayers) {
  write_data("d", 200, 32, 20, 3);
  auto r = run("sweep --data " + p("d") + " --layers 0-31 --epochs 1 --lr 1e-2 --threads 4 --out " + p("best.json") +
               " --csv " + p("sweep.csv") + " --report " + p("sweep.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string csv = io::read_file(p("sweep.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 33);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  const auto best = read_probe(p("best.json"));
  EXPECT_EQ(best.metadata["selected_layer"], best.layer);
  EXPECT_EQ(best.metadata["selection_metric"], "val_brier");
  EXPECT_EQ(json::parse(io::read_file(p("sweep.json")))["best_layer"], best.layer);

  r = run("sweep --data " + p("d") + " --layers 5..8 --select val_kuiper --epochs 1 --out " + p("k.json") + " --csv " +
          p("k.csv") + " --report " + p("k_report.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(read_probe(p("k.json")).metadata["selection_metric"], "val_kuiper");
  const std::string k_csv = io::read_file(p("k.csv"));
  EXPECT_EQ(std::count(k_csv.begin(), k_csv.end(), '\n'), 5);
}

TEST_F(CliTest, EvalReproducesTrainingValidationNumbers) {
  write_data("d", 400, 1, 0);
  ASSERT_EQ(run("train --data " + p("d") + " --layer 0 --lr 1e-2 --out " + p("probe.json") + " --report " + p("train.json"))
                .exit_code,
            0);
  auto r = run("eval --probe " + p("probe.json") + " --data " + p("d") + " --split val --report " + p("eval.json") +
               " --svg " + p("eval.svg"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto train = json::parse(io::read_file(p("train.json")));
  const auto eval = json::parse(io::read_file(p("eval.json")));
  EXPECT_EQ(eval["report"], train["val"]);
  const std::string svg = io::read_file(p("eval.svg"));
  std::size_t bars = 0;
  for (auto pos = svg.find("<rect class=\"bar\""); pos != std::string::npos; pos = svg.find("<rect class=\"bar\"", pos + 1)) ++bars;
  EXPECT_EQ(bars, 10u);
  EXPECT_NE(svg.find("class=\"diagonal\""), std::string::npos);
  EXPECT_NE(svg.find("class=\"proportion\""), std::string::npos);
}

TEST_F(CliTest, ScoresBypassProbe) {
  io::write_file_atomic(p("s.jsonl"), records_to_jsonl(std::vector<PredictionRecord>{{0.9, 1, "verbalized"},
                                                                                     {0.8, 0, "verbalized"}}));
  auto r = run("eval --scores " + p("s.jsonl") + " --report " + p("e.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(json::parse(io::read_file(p("e.json")))["context"]["mode"], "scores");
  r = run("metrics " + p("s.jsonl") + " --bins 5 --thresholds 0,0.85 --report " + p("m.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto m = json::parse(io::read_file(p("m.json")));
  EXPECT_EQ(m["report"]["num_bins"], 5);
  EXPECT_EQ(m["report"]["accuracy_at_threshold"].size(), 2u);
}

TEST_F(CliTest, BaselineCommands) {
  auto fx = testing::make_transcript_fixture(40, 30, 8);
  io::write_file_atomic(p("t.jsonl"), io::to_jsonl(fx.transcripts));
  io::write_file_atomic(p("labels.jsonl"), io::to_jsonl(fx.labels));
  const std::string base = "baseline --transcripts " + p("t.jsonl") + " --labels " + p("labels.jsonl");

  auto r = run(base + " --method majority --n 10 --report " + p("maj.json") + " --scores-out " + p("maj.jsonl"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(io::read_jsonl(p("maj.jsonl")).size(), 40u);

  r = run(base + " --method consistency --sweep-n 5,10,20,30 --sweep-temperature 0.7,1.0 --report " + p("sw.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto sw = json::parse(io::read_file(p("sw.json")));
  ASSERT_EQ(sw["sweep_n"].size(), 4u);
  EXPECT_EQ(sw["sweep_n"][0]["n"], 5);
  EXPECT_EQ(sw["sweep_temperature"].size(), 2u);

  r = run(base + " --method consistency --sweep-n 5..30 --report " + p("range.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(json::parse(io::read_file(p("range.json")))["sweep_n"].size(), 26u);

  r = run(base + " --method verbalized --report " + p("v.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto v = json::parse(io::read_file(p("v.json")));
  EXPECT_EQ(v["excluded"]["malformed"], fx.malformed_references);
  EXPECT_EQ(v["report"]["n"], 40 - fx.malformed_references - fx.missing_reference_verdicts);

  r = run(base + " --method majority --temperature any --n 60 --report " + p("any.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(json::parse(io::read_file(p("any.json")))["short_examples"], 0);
}

TEST_F(CliTest, InspectAndReplay) {
  write_data("d", 120, 2, 1);
  auto r = run("inspect " + p("d"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["valid"], true);

  ASSERT_EQ(run("sweep --data " + p("d") + " --epochs 2 --seed 9 --out " + p("b.json") + " --csv " + p("s.csv") +
                " --report " + p("s.json"))
                .exit_code,
            0);
  const std::string report = io::read_file(p("s.json"));
  const std::string probe = io::read_file(p("b.json"));
  const std::string csv = io::read_file(p("s.csv"));
  fs::remove(p("b.json"));
  r = run("replay " + p("s.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(io::read_file(p("s.json")), report);
  EXPECT_EQ(io::read_file(p("b.json")), probe);
  EXPECT_EQ(io::read_file(p("s.csv")), csv);
}

TEST_F(CliTest, CorruptLayerFileIsRejected) {
  write_data("d", 100, 1, 0);
  auto bytes = io::read_file(p("d") + "/layer_0.actv");
  bytes.resize(bytes.size() - 4);
  io::write_file_atomic(p("d") + "/layer_0.actv", bytes);
  const auto r = run("inspect " + p("d"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(single_error_line(r.err)["error"], "format");
}

}  // namespace
}  // namespace judgecal
