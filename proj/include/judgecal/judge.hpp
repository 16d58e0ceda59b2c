#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "judgecal/error.hpp"
#include "judgecal/io.hpp"
#include "judgecal/selective.hpp"
#include "judgecal/verdict.hpp"
#include "json.hpp"

namespace judgecal {

enum class ParseStatus { ok, no_verdict, no_confidence, malformed };

inline std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::ok: return "ok";
    case ParseStatus::no_verdict: return "no_verdict";
    case ParseStatus::no_confidence: return "no_confidence";
    case ParseStatus::malformed: return "malformed";
  }
  return "malformed";
}

inline ParseStatus parse_status_from_string(std::string_view s) {
  if (s == "ok") return ParseStatus::ok;
  if (s == "no_verdict") return ParseStatus::no_verdict;
  if (s == "no_confidence") return ParseStatus::no_confidence;
  if (s == "malformed") return ParseStatus::malformed;
  throw Error(ErrorCode::invalid_argument, "unknown parse_status '" + std::string(s) + "'");
}

struct ParsedJudgement {
  std::optional<Verdict> verdict;
  std::optional<double> verbalized_confidence;
  ParseStatus status = ParseStatus::no_verdict;

  bool operator==(const ParsedJudgement&) const = default;
};

struct JudgeTranscript {
  std::string example_id;
  int sample_index = 0;
  double temperature = 0.0;
  Formulation formulation = Formulation::PaV;
  std::string raw_text;
  std::optional<TokenLogprobs> token_logprobs;
  ParsedJudgement parsed;

  bool has_verdict() const { return parsed.verdict.has_value(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Contents of the last <tag>...</tag> pair, if any.
inline std::optional<std::string_view> last_tag_content(std::string_view text, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  std::size_t pos = text.rfind(open);
  while (pos != std::string_view::npos) {
    const std::size_t begin = pos + open.size();
    const std::size_t end = text.find(close, begin);
    if (end != std::string_view::npos) return text.substr(begin, end - begin);
    if (pos == 0) break;
    pos = text.rfind(open, pos - 1);
  }
  return std::nullopt;
}

/// Whole-string decimal number, optionally followed by '%'.
inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.back() == '%') s = trim(s.substr(0, s.size() - 1));
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

template <typename T, std::size_t N>
std::optional<T> last_label(std::string_view text,
                            const std::array<std::pair<std::string_view, T>, N>& labels) {
  std::optional<T> found;
  std::size_t best = 0;
  for (const auto& [pattern, value] : labels) {
    const std::size_t pos = text.rfind(pattern);
    if (pos != std::string_view::npos && (!found || pos >= best)) {
      found = value;
      best = pos;
    }
  }
  return found;
}

inline constexpr std::array<std::pair<std::string_view, Winner>, 2> kVerdictLabels{
    {{"[[A]]", Winner::A}, {"[[B]]", Winner::B}}};

inline constexpr std::array<std::pair<std::string_view, Likert>, 5> kLikertLabels{
    {{"[[A>>B]]", Likert::a_much_better},
     {"[[A>B]]", Likert::a_better},
     {"[[A=B]]", Likert::tie},
     {"[[B>A]]", Likert::b_better},
     {"[[B>>A]]", Likert::b_much_better}}};

}  // namespace detail

/// Extracts the verdict and verbalized confidence from a judge generation.
/// Never throws; failures are reported through the status. The last
/// occurrence of each marker wins, since reasoning may quote the format.
inline ParsedJudgement parse_transcript(std::string_view raw_text, Formulation formulation) {
  ParsedJudgement out;
  bool malformed = false;

  switch (formulation) {
    case Formulation::PaV: {
      std::optional<Winner> w;
      if (auto answer = detail::last_tag_content(raw_text, "answer")) {
        w = detail::last_label(*answer, detail::kVerdictLabels);
      }
      if (!w) w = detail::last_label(raw_text, detail::kVerdictLabels);
      if (w) out.verdict = Verdict{Formulation::PaV, *w, std::nullopt, std::nullopt};
      break;
    }
    case Formulation::PaS: {
      const auto a = detail::last_tag_content(raw_text, "score_A");
      const auto b = detail::last_tag_content(raw_text, "score_B");
      if (a && b) {
        const auto sa = detail::parse_number(*a);
        const auto sb = detail::parse_number(*b);
        const auto in_range = [](std::optional<double> v) { return v && *v >= 0.0 && *v <= 10.0; };
        if (in_range(sa) && in_range(sb)) {
          out.verdict = make_pas_verdict(Scores{*sa, *sb});
        } else {
          malformed = true;
        }
      }
      break;
    }
    case Formulation::PaL: {
      if (auto l = detail::last_label(raw_text, detail::kLikertLabels)) out.verdict = make_pal_verdict(*l);
      break;
    }
  }

  if (auto tag = detail::last_tag_content(raw_text, "confidence")) {
    const auto value = detail::parse_number(*tag);
    if (!value || *value < 0.0 || *value > 100.0) {
      malformed = true;
    } else {
      out.verbalized_confidence = *value > 1.0 ? *value / 100.0 : *value;
    }
  }

  if (malformed) {
    out.verdict.reset();
    out.verbalized_confidence.reset();
    out.status = ParseStatus::malformed;
  } else if (!out.verdict) {
    out.status = ParseStatus::no_verdict;
  } else {
    out.status = out.verbalized_confidence ? ParseStatus::ok : ParseStatus::no_confidence;
  }
  return out;
}

inline void parse_in_place(JudgeTranscript& t) { t.parsed = parse_transcript(t.raw_text, t.formulation); }

// ---------------------------------------------------------------------------
// Multi-generation aggregation

/// Agreement fraction kept as an exact ratio.
struct VoteFraction {
  std::size_t agreeing = 0;
  std::size_t parseable = 0;
  double value() const { return static_cast<double>(agreeing) / static_cast<double>(parseable); }
};

struct ConsistencyResult {
  Verdict verdict;
  VoteFraction fraction;
  double confidence = 0.0;
};

/// Fraction of parseable samples whose winner matches the reference verdict.
inline ConsistencyResult consistency_confidence(std::span<const JudgeTranscript> samples,
                                                const Verdict& reference) {
  VoteFraction f;
  for (const auto& s : samples) {
    if (!s.has_verdict()) continue;
    ++f.parseable;
    if (s.parsed.verdict->winner == reference.winner) ++f.agreeing;
  }
  detail::require(f.parseable > 0, ErrorCode::degenerate_input, "no parseable samples");
  return {reference, f, f.value()};
}

struct MajorityResult {
  Verdict verdict;
  VoteFraction fraction;
  double confidence = 0.0;
  bool tie_flag = false;
};

/// Modal winner and its share of parseable samples. Modal ties go to the
/// smallest label in the order A < B < tie and set tie_flag.
inline MajorityResult majority_confidence(std::span<const JudgeTranscript> samples) {
  std::array<std::size_t, 3> counts{};
  std::optional<Formulation> formulation;
  std::size_t parseable = 0;
  for (const auto& s : samples) {
    if (!s.has_verdict()) continue;
    ++parseable;
    ++counts[static_cast<std::size_t>(s.parsed.verdict->winner)];
    if (!formulation) formulation = s.parsed.verdict->formulation;
  }
  detail::require(parseable > 0, ErrorCode::degenerate_input, "no parseable samples");
  std::size_t mode = 0;
  for (std::size_t k = 1; k < counts.size(); ++k) {
    if (counts[k] > counts[mode]) mode = k;
  }
  std::size_t holders = 0;
  for (std::size_t c : counts) holders += c == counts[mode] ? 1 : 0;

  MajorityResult r;
  r.verdict = Verdict{*formulation, static_cast<Winner>(mode), std::nullopt, std::nullopt};
  r.fraction = {counts[mode], parseable};
  r.confidence = r.fraction.value();
  r.tie_flag = holders > 1;
  return r;
}

// ---------------------------------------------------------------------------
// Transcript JSONL

inline JudgeTranscript transcript_from_json(const nlohmann::json& j) {
  JudgeTranscript t;
  t.example_id = j.at("example_id").get<std::string>();
  t.sample_index = j.at("sample_index").get<int>();
  t.temperature = j.value("temperature", 0.0);
  t.formulation = parse_formulation(j.at("formulation").get<std::string>());
  t.raw_text = j.at("raw_text").get<std::string>();
  if (j.contains("token_logprobs") && !j.at("token_logprobs").is_null()) {
    t.token_logprobs = token_logprobs_from_json(j.at("token_logprobs"));
  }
  return t;
}

/// Input fields plus the parse results.
inline nlohmann::json to_enriched_json(const JudgeTranscript& t) {
  nlohmann::json j{{"example_id", t.example_id},
                   {"sample_index", t.sample_index},
                   {"temperature", t.temperature},
                   {"formulation", to_string(t.formulation)},
                   {"raw_text", t.raw_text}};
  if (t.token_logprobs) j["token_logprobs"] = to_json(*t.token_logprobs);
  j["verdict"] = t.parsed.verdict ? to_json(*t.parsed.verdict) : nlohmann::json(nullptr);
  j["verbalized_confidence"] =
      t.parsed.verbalized_confidence ? nlohmann::json(*t.parsed.verbalized_confidence) : nlohmann::json(nullptr);
  j["parse_status"] = to_string(t.parsed.status);
  return j;
}

/// Reads transcripts and parses each one. Output order equals input order.
inline std::vector<JudgeTranscript> read_transcripts(const std::filesystem::path& path) {
  std::vector<JudgeTranscript> out;
  std::size_t line = 0;
  for (const auto& row : io::read_jsonl(path)) {
    ++line;
    try {
      out.push_back(transcript_from_json(row));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::format, path.string() + ": transcript " + std::to_string(line) + ": " + e.what());
    }
    parse_in_place(out.back());
  }
  return out;
}

}  // namespace judgecal
