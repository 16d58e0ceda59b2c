#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "judgecal/error.hpp"
#include "judgecal/io.hpp"
#include "json.hpp"

namespace judgecal {

/// One scored prediction: a confidence and whether the judged verdict was right.
struct PredictionRecord {
  double confidence = 0.0;
  int correct = 0;
  std::string source = "other";

  bool operator==(const PredictionRecord&) const = default;
};

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_confidence;  // absent for empty bins
  std::optional<double> accuracy;         // absent for empty bins
  double proportion = 0.0;
};

struct ThresholdPoint {
  double threshold = 0.0;
  std::optional<double> accuracy;  // absent when nothing clears the threshold
  double coverage = 0.0;
};

enum class KuiperWeighting { score_weighted, unweighted };

inline constexpr int kDefaultBins = 10;

inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(i / 10.0);
  return t;
}

inline void validate_records(std::span<const PredictionRecord> records) {
  detail::require(!records.empty(), ErrorCode::degenerate_input, "empty input");
  for (const auto& r : records) {
    detail::require(std::isfinite(r.confidence) && r.confidence >= 0.0 && r.confidence <= 1.0,
                    ErrorCode::invalid_argument, "confidence outside [0,1]");
    detail::require(r.correct == 0 || r.correct == 1, ErrorCode::invalid_argument,
                    "correct must be 0 or 1");
  }
}

/// Bin index for equal-width bins over [0,1]: floor(conf * M), with a
/// confidence of exactly 1.0 folded into the top bin.
inline std::size_t bin_index(double confidence, int num_bins) {
  const auto m = static_cast<std::size_t>(std::floor(confidence * num_bins));
  return std::min(m, static_cast<std::size_t>(num_bins - 1));
}

namespace detail {

struct BinSums {
  std::size_t count = 0;
  double confidence = 0.0;
  double correct = 0.0;
};

inline std::vector<BinSums> bin_sums(std::span<const PredictionRecord> records, int num_bins) {
  require(num_bins >= 1, ErrorCode::invalid_argument, "num_bins must be >= 1");
  std::vector<BinSums> bins(static_cast<std::size_t>(num_bins));
  for (const auto& r : records) {
    auto& b = bins[bin_index(r.confidence, num_bins)];
    ++b.count;
    b.confidence += r.confidence;
    b.correct += r.correct;
  }
  return bins;
}

}  // namespace detail

/// Expected calibration error with equal-width bins.
inline double ece(std::span<const PredictionRecord> records, int num_bins = kDefaultBins) {
  validate_records(records);
  const double n = static_cast<double>(records.size());
  double total = 0.0;
  for (const auto& b : detail::bin_sums(records, num_bins)) {
    if (b.count == 0) continue;
    const double c = static_cast<double>(b.count);
    total += (c / n) * std::abs(b.correct / c - b.confidence / c);
  }
  return total;
}

/// Kuiper statistic: range of the weighted cumulative differences
/// C_k = (1/n) sum_{j<=k} (R_j - S_j) W_j over records sorted by confidence,
/// including C_0 = 0. Ties keep input order.
inline double kuiper(std::span<const PredictionRecord> records,
                     KuiperWeighting weighting = KuiperWeighting::score_weighted) {
  validate_records(records);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].confidence < records[b].confidence;
  });
  const double n = static_cast<double>(records.size());
  double cumulative = 0.0;
  double hi = 0.0;
  double lo = 0.0;
  for (std::size_t idx : order) {
    const auto& r = records[idx];
    const double w = weighting == KuiperWeighting::score_weighted ? r.confidence : 1.0;
    cumulative += (r.correct - r.confidence) * w;
    hi = std::max(hi, cumulative / n);
    lo = std::min(lo, cumulative / n);
  }
  return hi - lo;
}

inline double brier_score(std::span<const PredictionRecord> records) {
  validate_records(records);
  double total = 0.0;
  for (const auto& r : records) {
    const double d = r.confidence - r.correct;
    total += d * d;
  }
  return total / static_cast<double>(records.size());
}

inline std::vector<ReliabilityBin> reliability_bins(std::span<const PredictionRecord> records,
                                                    int num_bins = kDefaultBins) {
  validate_records(records);
  const double n = static_cast<double>(records.size());
  const auto sums = detail::bin_sums(records, num_bins);
  std::vector<ReliabilityBin> bins;
  bins.reserve(sums.size());
  for (std::size_t m = 0; m < sums.size(); ++m) {
    ReliabilityBin bin;
    bin.lower = static_cast<double>(m) / num_bins;
    bin.upper = static_cast<double>(m + 1) / num_bins;
    bin.count = sums[m].count;
    bin.proportion = static_cast<double>(sums[m].count) / n;
    if (sums[m].count > 0) {
      const double c = static_cast<double>(sums[m].count);
      bin.mean_confidence = sums[m].confidence / c;
      bin.accuracy = sums[m].correct / c;
    }
    bins.push_back(bin);
  }
  return bins;
}

inline std::vector<ThresholdPoint> accuracy_at_thresholds(std::span<const PredictionRecord> records,
                                                          std::span<const double> thresholds) {
  std::vector<ThresholdPoint> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    detail::require(t >= 0.0 && t <= 1.0, ErrorCode::invalid_argument,
                    "threshold outside [0,1]");
    std::size_t kept = 0;
    std::size_t right = 0;
    for (const auto& r : records) {
      if (r.confidence >= t) {
        ++kept;
        right += static_cast<std::size_t>(r.correct);
      }
    }
    ThresholdPoint p;
    p.threshold = t;
    p.coverage = records.empty() ? 0.0 : static_cast<double>(kept) / records.size();
    if (kept > 0) p.accuracy = static_cast<double>(right) / kept;
    points.push_back(p);
  }
  return points;
}

// ---------------------------------------------------------------------------
// JSONL records

inline nlohmann::json to_json(const PredictionRecord& r) {
  return nlohmann::json{{"confidence", r.confidence}, {"correct", r.correct}, {"source", r.source}};
}

inline PredictionRecord record_from_json(const nlohmann::json& j) {
  PredictionRecord r;
  r.confidence = j.at("confidence").get<double>();
  r.correct = j.at("correct").get<int>();
  r.source = j.value("source", std::string("other"));
  return r;
}

inline std::vector<PredictionRecord> read_records(const std::filesystem::path& path) {
  std::vector<PredictionRecord> records;
  std::size_t line = 0;
  for (const auto& row : io::read_jsonl(path)) {
    ++line;
    try {
      records.push_back(record_from_json(row));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::format, path.string() + ": record " + std::to_string(line) + ": " + e.what());
    }
  }
  return records;
}

inline std::string records_to_jsonl(std::span<const PredictionRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

}  // namespace judgecal
