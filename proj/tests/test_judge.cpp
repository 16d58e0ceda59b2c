#include <gtest/gtest.h>

#include <numeric>

#include "judgecal/judge.hpp"
#include "judgecal/random.hpp"
#include "test_support.hpp"

namespace judgecal {
namespace {

JudgeTranscript vote(Winner w, int index = 1) {
  JudgeTranscript t;
  t.example_id = "e";
  t.sample_index = index;
  t.parsed.verdict = Verdict{Formulation::PaV, w, std::nullopt, std::nullopt};
  t.parsed.status = ParseStatus::no_confidence;
  return t;
}

JudgeTranscript unparseable() {
  JudgeTranscript t;
  t.example_id = "e";
  t.parsed.status = ParseStatus::no_verdict;
  return t;
}

TEST(Parse, VerdictAndConfidence) {
  const auto p = parse_transcript("<answer>[[A]]</answer><confidence>0.8</confidence>", Formulation::PaV);
  EXPECT_EQ(p.status, ParseStatus::ok);
  EXPECT_EQ(p.verdict->winner, Winner::A);
  EXPECT_EQ(*p.verbalized_confidence, 0.8);
}

TEST(Parse, PercentScaleIsNormalized) {
  const auto p = parse_transcript("[[B]] <confidence>85</confidence>", Formulation::PaV);
  EXPECT_NEAR(*p.verbalized_confidence, 0.85, 1e-15);
  EXPECT_EQ(parse_transcript("[[B]] <confidence>1</confidence>", Formulation::PaV).verbalized_confidence, 1.0);
}

TEST(Parse, OutOfRangeConfidenceIsMalformed) {
  for (const char* c : {"150", "-1", "abc", "0.5.5", "nan", "inf"}) {
    const auto p = parse_transcript(std::string("[[A]]<confidence>") + c + "</confidence>", Formulation::PaV);
    EXPECT_EQ(p.status, ParseStatus::malformed) << c;
    EXPECT_FALSE(p.verdict.has_value());
    EXPECT_FALSE(p.verbalized_confidence.has_value());
  }
}

TEST(Parse, LastOccurrenceWins) {
  const auto p = parse_transcript(
      "Template: <answer>[[A]]</answer><confidence>0.1</confidence>\n<answer>[[B]]</answer><confidence>0.9</confidence>",
      Formulation::PaV);
  EXPECT_EQ(p.verdict->winner, Winner::B);
  EXPECT_EQ(*p.verbalized_confidence, 0.9);
}

TEST(Parse, AnswerBlockTakesPrecedence) {
  const auto p = parse_transcript("<answer>[[A]]</answer> though [[B]] was close", Formulation::PaV);
  EXPECT_EQ(p.verdict->winner, Winner::A);
  EXPECT_EQ(p.status, ParseStatus::no_confidence);
}

TEST(Parse, UntaggedConfidenceIsIgnored) {
  const auto p = parse_transcript("My final verdict is tie: [[A=B]]. Confidence: 0.85", Formulation::PaL);
  EXPECT_EQ(p.verdict->likert, Likert::tie);
  EXPECT_EQ(p.verdict->winner, Winner::tie);
  EXPECT_EQ(p.status, ParseStatus::no_confidence);
  const auto tagged = parse_transcript("My final verdict is tie: [[A=B]]. <confidence> 85 </confidence>", Formulation::PaL);
  EXPECT_NEAR(*tagged.verbalized_confidence, 0.85, 1e-15);
}

TEST(Parse, SpacedAnswerTag) {
  const auto p = parse_transcript("Reasoning... <answer> [[B]] </answer>", Formulation::PaV);
  EXPECT_EQ(p.verdict->winner, Winner::B);
  EXPECT_EQ(p.status, ParseStatus::no_confidence);
}

TEST(Parse, MissingVerdict) {
  EXPECT_EQ(parse_transcript("no idea", Formulation::PaV).status, ParseStatus::no_verdict);
  EXPECT_EQ(parse_transcript("<confidence>0.4</confidence>", Formulation::PaL).status, ParseStatus::no_verdict);
}

TEST(Parse, ScoresDetermineWinner) {
  auto p = parse_transcript("<score_A>4</score_A><score_B>9</score_B>", Formulation::PaS);
  EXPECT_EQ(p.verdict->winner, Winner::B);
  EXPECT_EQ(p.verdict->scores->score_a, 4.0);
  p = parse_transcript("<score_A>6</score_A><score_B>6</score_B><confidence>0.5</confidence>", Formulation::PaS);
  EXPECT_EQ(p.verdict->winner, Winner::tie);
  p = parse_transcript("<score_A>12</score_A><score_B>6</score_B>", Formulation::PaS);
  EXPECT_EQ(p.status, ParseStatus::malformed);
}

TEST(Parse, LikertLabels) {
  const std::pair<const char*, Winner> cases[] = {{"[[A>>B]]", Winner::A}, {"[[A>B]]", Winner::A},
                                                  {"[[A=B]]", Winner::tie}, {"[[B>A]]", Winner::B},
                                                  {"[[B>>A]]", Winner::B}};
  for (const auto& [label, w] : cases) {
    const auto p = parse_transcript(std::string("Verdict: ") + label, Formulation::PaL);
    ASSERT_TRUE(p.verdict.has_value()) << label;
    EXPECT_EQ(p.verdict->winner, w);
    EXPECT_EQ(to_string(*p.verdict->likert), std::string_view(label).substr(2, std::string_view(label).size() - 4));
  }
}

TEST(Parse, FixtureCorpus) {
  const auto rows = io::read_jsonl(JUDGECAL_TEST_FIXTURES "/parser_corpus.jsonl");
  ASSERT_GE(rows.size(), 30u);
  for (const auto& row : rows) {
    const auto p = parse_transcript(row.at("raw_text").get<std::string>(),
                                    parse_formulation(row.at("formulation").get<std::string>()));
    const auto label = "case " + row.at("case").dump();
    EXPECT_EQ(to_string(p.status), row.at("expected_status").get<std::string>()) << label;
    if (row.at("expected_winner").is_null()) {
      EXPECT_FALSE(p.verdict.has_value()) << label;
    } else {
      ASSERT_TRUE(p.verdict.has_value()) << label;
      EXPECT_EQ(to_string(p.verdict->winner), row.at("expected_winner").get<std::string>()) << label;
    }
    if (row.at("expected_confidence").is_null()) {
      EXPECT_FALSE(p.verbalized_confidence.has_value()) << label;
    } else {
      ASSERT_TRUE(p.verbalized_confidence.has_value()) << label;
      EXPECT_NEAR(*p.verbalized_confidence, row.at("expected_confidence").get<double>(), 1e-12) << label;
    }
  }
}

TEST(Parse, NeverThrowsOnArbitraryText) {
  Rng rng(5);
  const std::string alphabet = "<>/[]AB=answerconfidencescore_0123456789.% \n";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    const std::size_t len = rng.below(80);
    for (std::size_t k = 0; k < len; ++k) text.push_back(alphabet[rng.below(alphabet.size())]);
    for (auto f : {Formulation::PaV, Formulation::PaS, Formulation::PaL}) {
      const auto p = parse_transcript(text, f);
      if (p.verbalized_confidence) {
        EXPECT_GE(*p.verbalized_confidence, 0.0);
        EXPECT_LE(*p.verbalized_confidence, 1.0);
      }
      EXPECT_EQ(p.status == ParseStatus::ok, p.verdict.has_value() && p.verbalized_confidence.has_value());
    }
  }
}

TEST(Consistency, SevenOfTen) {
  std::vector<JudgeTranscript> samples;
  for (int i = 0; i < 7; ++i) samples.push_back(vote(Winner::A));
  for (int i = 0; i < 3; ++i) samples.push_back(vote(Winner::B));
  const auto r = consistency_confidence(samples, Verdict{Formulation::PaV, Winner::A, std::nullopt, std::nullopt});
  EXPECT_EQ(r.fraction.agreeing, 7u);
  EXPECT_EQ(r.fraction.parseable, 10u);
  EXPECT_EQ(r.confidence, 0.7);
}

TEST(Consistency, UnparseableSamplesAreExcluded) {
  std::vector<JudgeTranscript> samples{vote(Winner::B), unparseable(), vote(Winner::A), unparseable()};
  const auto r = consistency_confidence(samples, Verdict{Formulation::PaV, Winner::B, std::nullopt, std::nullopt});
  EXPECT_EQ(r.confidence, 0.5);
  std::vector<JudgeTranscript> none{unparseable()};
  EXPECT_THROW(consistency_confidence(none, r.verdict), Error);
}

TEST(Majority, ClearMode) {
  std::vector<JudgeTranscript> samples{vote(Winner::A), vote(Winner::A), vote(Winner::A), vote(Winner::B),
                                       vote(Winner::B)};
  const auto r = majority_confidence(samples);
  EXPECT_EQ(r.verdict.winner, Winner::A);
  EXPECT_EQ(r.confidence, 0.6);
  EXPECT_FALSE(r.tie_flag);
}

TEST(Majority, TieGoesToSmallestLabel) {
  std::vector<JudgeTranscript> ab{vote(Winner::B), vote(Winner::A)};
  auto r = majority_confidence(ab);
  EXPECT_EQ(r.verdict.winner, Winner::A);
  EXPECT_EQ(r.confidence, 0.5);
  EXPECT_TRUE(r.tie_flag);
  std::vector<JudgeTranscript> btie{vote(Winner::tie), vote(Winner::B)};
  r = majority_confidence(btie);
  EXPECT_EQ(r.verdict.winner, Winner::B);
  EXPECT_TRUE(r.tie_flag);
}

TEST(Majority, AgreesWithCountingOracle) {
  Rng rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<JudgeTranscript> samples;
    std::array<std::size_t, 3> counts{};
    const std::size_t votes = 1 + rng.below(30);
    for (std::size_t k = 0; k < votes; ++k) {
      if (rng.below(5) == 0) {
        samples.push_back(unparseable());
        continue;
      }
      const auto w = static_cast<Winner>(rng.below(3));
      ++counts[static_cast<std::size_t>(w)];
      samples.push_back(vote(w));
    }
    const std::size_t total = counts[0] + counts[1] + counts[2];
    if (total == 0) {
      EXPECT_THROW(majority_confidence(samples), Error);
      continue;
    }
    const std::size_t top = *std::max_element(counts.begin(), counts.end());
    const auto first = static_cast<std::size_t>(std::find(counts.begin(), counts.end(), top) - counts.begin());
    const auto r = majority_confidence(samples);
    EXPECT_EQ(static_cast<std::size_t>(r.verdict.winner), first);
    EXPECT_EQ(r.fraction.agreeing, top);
    EXPECT_EQ(r.fraction.parseable, total);
    EXPECT_EQ(r.tie_flag, std::count(counts.begin(), counts.end(), top) > 1);
    EXPECT_GE(r.confidence, 1.0 / 3.0);
  }
}

TEST(Correctness, WinnerEquality) {
  const Verdict a{Formulation::PaV, Winner::A, std::nullopt, std::nullopt};
  EXPECT_EQ(score_correctness(a, Winner::A), 1);
  EXPECT_EQ(score_correctness(a, Winner::B), 0);
  EXPECT_EQ(score_correctness(a, Winner::tie), 0);
  EXPECT_EQ(score_correctness(make_pal_verdict(Likert::b_much_better), Winner::B), 1);
  EXPECT_EQ(score_correctness(make_pas_verdict({5, 5}), Winner::tie), 1);
}

TEST(Transcripts, EnrichedJsonCarriesParseResults) {
  const auto dir = testing::scratch_dir("transcripts");
  nlohmann::json row{{"example_id", "x1"},
                     {"sample_index", 0},
                     {"temperature", 0.0},
                     {"formulation", "PaL"},
                     {"raw_text", "[[B>A]]<confidence>70</confidence>"},
                     {"token_logprobs", {{{"logprob", -0.1}, {"top_k", nlohmann::json::array()}}}}};
  io::write_file_atomic(dir / "t.jsonl", row.dump() + "\n");
  const auto ts = read_transcripts(dir / "t.jsonl");
  ASSERT_EQ(ts.size(), 1u);
  const auto j = to_enriched_json(ts[0]);
  EXPECT_EQ(j["parse_status"], "ok");
  EXPECT_EQ(j["verbalized_confidence"], 0.7);
  EXPECT_EQ(j["verdict"]["winner"], "B");
  EXPECT_EQ(j["verdict"]["likert"], "B>A");
  EXPECT_EQ(j["raw_text"], row["raw_text"]);
  const auto again = transcript_from_json(j);
  EXPECT_EQ(again.token_logprobs, ts[0].token_logprobs);

  io::write_file_atomic(dir / "bad.jsonl", "{\"example_id\": \"x\"}\n");
  EXPECT_THROW(read_transcripts(dir / "bad.jsonl"), Error);
}

}  // namespace
}  // namespace judgecal
