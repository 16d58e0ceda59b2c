#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "judgecal/error.hpp"
#include "json.hpp"

namespace judgecal {

enum class Formulation { PaV, PaS, PaL };

// Declaration order is the majority tie-break order: A < B < tie.
enum class Winner { A, B, tie };

enum class Likert { a_much_better, a_better, tie, b_better, b_much_better };

struct Scores {
  double score_a = 0.0;
  double score_b = 0.0;
  bool operator==(const Scores&) const = default;
};

struct Verdict {
  Formulation formulation = Formulation::PaV;
  Winner winner = Winner::tie;
  std::optional<Scores> scores;  // PaS only
  std::optional<Likert> likert;  // PaL only

  bool operator==(const Verdict&) const = default;
};

inline Winner winner_from_scores(const Scores& s) {
  if (s.score_a > s.score_b) return Winner::A;
  if (s.score_b > s.score_a) return Winner::B;
  return Winner::tie;
}

inline Winner winner_from_likert(Likert l) {
  switch (l) {
    case Likert::a_much_better:
    case Likert::a_better: return Winner::A;
    case Likert::b_better:
    case Likert::b_much_better: return Winner::B;
    case Likert::tie: return Winner::tie;
  }
  return Winner::tie;
}

inline Verdict make_pas_verdict(Scores s) {
  return Verdict{Formulation::PaS, winner_from_scores(s), s, std::nullopt};
}

inline Verdict make_pal_verdict(Likert l) {
  return Verdict{Formulation::PaL, winner_from_likert(l), std::nullopt, l};
}

inline std::string_view to_string(Formulation f) {
  switch (f) {
    case Formulation::PaV: return "PaV";
    case Formulation::PaS: return "PaS";
    case Formulation::PaL: return "PaL";
  }
  return "PaV";
}

inline std::string_view to_string(Winner w) {
  switch (w) {
    case Winner::A: return "A";
    case Winner::B: return "B";
    case Winner::tie: return "tie";
  }
  return "tie";
}

inline std::string_view to_string(Likert l) {
  switch (l) {
    case Likert::a_much_better: return "A>>B";
    case Likert::a_better: return "A>B";
    case Likert::tie: return "A=B";
    case Likert::b_better: return "B>A";
    case Likert::b_much_better: return "B>>A";
  }
  return "A=B";
}

inline Formulation parse_formulation(std::string_view s) {
  if (s == "PaV") return Formulation::PaV;
  if (s == "PaS") return Formulation::PaS;
  if (s == "PaL") return Formulation::PaL;
  throw Error(ErrorCode::invalid_argument, "unknown formulation '" + std::string(s) + "'");
}

inline Winner parse_winner(std::string_view s) {
  if (s == "A") return Winner::A;
  if (s == "B") return Winner::B;
  if (s == "tie") return Winner::tie;
  throw Error(ErrorCode::invalid_argument, "unknown winner '" + std::string(s) + "'");
}

inline Likert parse_likert(std::string_view s) {
  if (s == "A>>B") return Likert::a_much_better;
  if (s == "A>B") return Likert::a_better;
  if (s == "A=B") return Likert::tie;
  if (s == "B>A") return Likert::b_better;
  if (s == "B>>A") return Likert::b_much_better;
  throw Error(ErrorCode::invalid_argument, "unknown likert label '" + std::string(s) + "'");
}

inline nlohmann::json to_json(const Verdict& v) {
  nlohmann::json j;
  j["formulation"] = to_string(v.formulation);
  j["winner"] = to_string(v.winner);
  if (v.scores) {
    j["score_a"] = v.scores->score_a;
    j["score_b"] = v.scores->score_b;
  }
  if (v.likert) j["likert"] = to_string(*v.likert);
  return j;
}

inline Verdict verdict_from_json(const nlohmann::json& j) {
  Verdict v;
  v.formulation = parse_formulation(j.at("formulation").get<std::string>());
  v.winner = parse_winner(j.at("winner").get<std::string>());
  if (j.contains("score_a") && j.contains("score_b")) {
    v.scores = Scores{j.at("score_a").get<double>(), j.at("score_b").get<double>()};
  }
  if (j.contains("likert")) v.likert = parse_likert(j.at("likert").get<std::string>());
  return v;
}

/// 1 iff the verdict picks the ground-truth winner. A tie verdict ranks
/// neither response higher, so it only scores against a tie ground truth.
inline int score_correctness(const Verdict& verdict, Winner ground_truth) {
  return verdict.winner == ground_truth ? 1 : 0;
}

}  // namespace judgecal
