#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "judgecal/calibration.hpp"
#include "judgecal/error.hpp"
#include "json.hpp"

namespace judgecal {

/// AUROC via the Mann-Whitney U statistic with average ranks for ties.
/// Equals P(score of a random positive > score of a random negative), with
/// ties counting one half. Higher scores must mean "more likely correct".
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  detail::require(scores.size() == labels.size(), ErrorCode::dimension_mismatch,
                  "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    // ranks are 1-based; the tie group i..j shares the mean rank
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      detail::require(labels[order[k]] == 0 || labels[order[k]] == 1,
                      ErrorCode::invalid_argument, "labels must be 0 or 1");
      if (labels[order[k]] == 1) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const std::size_t negatives = order.size() - positives;
  detail::require(positives > 0 && negatives > 0, ErrorCode::degenerate_input,
                  "single-class input: AUROC needs both correct and incorrect records");
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

inline double auroc(std::span<const PredictionRecord> records) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(records.size());
  labels.reserve(records.size());
  for (const auto& r : records) {
    scores.push_back(r.confidence);
    labels.push_back(r.correct);
  }
  return auroc(scores, labels);
}

// ---------------------------------------------------------------------------
// Single-pass scores from generated-token log-probabilities.

struct TopLogprob {
  long long token_id = 0;
  double logprob = 0.0;
  bool operator==(const TopLogprob&) const = default;
};

struct TokenLogprob {
  double logprob = 0.0;  // log-probability of the sampled token
  std::vector<TopLogprob> top_k;  // sorted by logprob, descending
  bool operator==(const TokenLogprob&) const = default;
};

using TokenLogprobs = std::vector<TokenLogprob>;

inline void validate(const TokenLogprobs& tokens) {
  for (const auto& t : tokens) {
    detail::require(std::isfinite(t.logprob) && t.logprob <= 0.0, ErrorCode::invalid_argument,
                    "token logprob must be finite and <= 0");
    for (std::size_t k = 0; k < t.top_k.size(); ++k) {
      detail::require(std::isfinite(t.top_k[k].logprob) && t.top_k[k].logprob <= 0.0,
                      ErrorCode::invalid_argument, "top-k logprob must be finite and <= 0");
      detail::require(k == 0 || t.top_k[k - 1].logprob >= t.top_k[k].logprob,
                      ErrorCode::invalid_argument, "top-k logprobs must be sorted descending");
    }
  }
}

namespace detail {

inline double mean_logprob(const TokenLogprobs& tokens) {
  require(!tokens.empty(), ErrorCode::degenerate_input, "empty token sequence");
  validate(tokens);
  double sum = 0.0;
  for (const auto& t : tokens) sum += t.logprob;
  return sum / static_cast<double>(tokens.size());
}

}  // namespace detail

/// Length-normalized sequence probability, exp(mean logprob).
inline double max_prob_score(const TokenLogprobs& tokens) {
  return std::exp(detail::mean_logprob(tokens));
}

/// exp(-mean logprob). An uncertainty: higher means less confident.
inline double perplexity_score(const TokenLogprobs& tokens) {
  return std::exp(-detail::mean_logprob(tokens));
}

/// Mean per-token entropy of the renormalized top-k distribution. The full
/// vocabulary distribution is not available from logprob dumps.
inline double entropy_score(const TokenLogprobs& tokens) {
  detail::require(!tokens.empty(), ErrorCode::degenerate_input, "empty token sequence");
  validate(tokens);
  double total = 0.0;
  for (const auto& t : tokens) {
    detail::require(!t.top_k.empty(), ErrorCode::invalid_argument,
                    "entropy needs top_k logprobs for every token");
    // log-sum-exp for the normalizer
    const double top = t.top_k.front().logprob;
    double z = 0.0;
    for (const auto& c : t.top_k) z += std::exp(c.logprob - top);
    const double log_z = top + std::log(z);
    double h = 0.0;
    for (const auto& c : t.top_k) {
      const double lp = c.logprob - log_z;
      h -= std::exp(lp) * lp;
    }
    total += h;
  }
  return total / static_cast<double>(tokens.size());
}

enum class ScoreOrientation { confidence, reciprocal, exp_negated };

inline std::string_view to_string(ScoreOrientation o) {
  switch (o) {
    case ScoreOrientation::confidence: return "confidence";
    case ScoreOrientation::reciprocal: return "reciprocal";
    case ScoreOrientation::exp_negated: return "exp_negated";
  }
  return "confidence";
}

inline nlohmann::json to_json(const TokenLogprobs& tokens) {
  auto arr = nlohmann::json::array();
  for (const auto& t : tokens) {
    nlohmann::json j{{"logprob", t.logprob}};
    if (!t.top_k.empty()) {
      auto top = nlohmann::json::array();
      for (const auto& c : t.top_k) top.push_back({{"token_id", c.token_id}, {"logprob", c.logprob}});
      j["top_k"] = std::move(top);
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

inline TokenLogprobs token_logprobs_from_json(const nlohmann::json& arr) {
  TokenLogprobs tokens;
  for (const auto& j : arr) {
    TokenLogprob t;
    t.logprob = j.at("logprob").get<double>();
    if (j.contains("top_k")) {
      for (const auto& c : j.at("top_k")) {
        t.top_k.push_back({c.at("token_id").get<long long>(), c.at("logprob").get<double>()});
      }
    }
    tokens.push_back(std::move(t));
  }
  return tokens;
}

}  // namespace judgecal
