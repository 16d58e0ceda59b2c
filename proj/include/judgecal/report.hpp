#pragma once

#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "judgecal/calibration.hpp"
#include "judgecal/io.hpp"
#include "judgecal/selective.hpp"
#include "json.hpp"

namespace judgecal {

struct CalibrationReport {
  std::string source;
  std::size_t n = 0;
  double ece = 0.0;
  double kuiper = 0.0;
  double kuiper_unweighted = 0.0;
  double brier = 0.0;
  std::optional<double> auroc;  // absent when only one class is present
  std::size_t num_bins = kDefaultBins;
  std::vector<ReliabilityBin> bins;
  std::vector<ThresholdPoint> accuracy_at_threshold;
};

inline CalibrationReport make_report(std::span<const PredictionRecord> records, std::string source,
                                     int num_bins = kDefaultBins,
                                     std::span<const double> thresholds = {}) {
  CalibrationReport r;
  r.source = std::move(source);
  r.n = records.size();
  r.num_bins = static_cast<std::size_t>(num_bins);
  r.ece = ece(records, num_bins);
  r.kuiper = kuiper(records, KuiperWeighting::score_weighted);
  r.kuiper_unweighted = kuiper(records, KuiperWeighting::unweighted);
  r.brier = brier_score(records);
  std::size_t positives = 0;
  for (const auto& rec : records) positives += static_cast<std::size_t>(rec.correct);
  if (positives > 0 && positives < records.size()) r.auroc = auroc(records);
  r.bins = reliability_bins(records, num_bins);
  const auto defaults = default_thresholds();
  r.accuracy_at_threshold =
      accuracy_at_thresholds(records, thresholds.empty() ? std::span<const double>(defaults) : thresholds);
  return r;
}

namespace detail {
inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace detail

inline nlohmann::json to_json(const CalibrationReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"count", b.count},
                    {"mean_confidence", detail::optional_json(b.mean_confidence)},
                    {"accuracy", detail::optional_json(b.accuracy)},
                    {"proportion", b.proportion}});
  }
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.accuracy_at_threshold) {
    curve.push_back({{"threshold", p.threshold},
                     {"accuracy", detail::optional_json(p.accuracy)},
                     {"coverage", p.coverage}});
  }
  return nlohmann::json{{"source", r.source},
                        {"n", r.n},
                        {"ece", r.ece},
                        {"kuiper", r.kuiper},
                        {"kuiper_unweighted", r.kuiper_unweighted},
                        {"brier", r.brier},
                        {"auroc", detail::optional_json(r.auroc)},
                        {"num_bins", r.num_bins},
                        {"bins", std::move(bins)},
                        {"accuracy_at_threshold", std::move(curve)}};
}

inline std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Reliability diagram rendered purely from report data: one bar per bin
/// (height = bin accuracy), the identity diagonal, and each bin's share of
/// samples printed above its bar.
inline std::string render_reliability_svg(const CalibrationReport& r, std::string_view title = {}) {
  constexpr double width = 480, height = 400, left = 50, top = 30, plot = 320;
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" +
         fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " + fmt(height) + "\">\n";
  svg += "<title>" + xml_escape(title.empty() ? std::string_view("reliability diagram") : title) + "</title>\n";
  svg += "<path class=\"axes\" d=\"M" + fmt(left) + " " + fmt(top) + " V" + fmt(top + plot) + " H" +
         fmt(left + plot) + "\" stroke=\"black\" fill=\"none\"/>\n";
  const double bar_w = plot / static_cast<double>(r.bins.size());
  for (std::size_t i = 0; i < r.bins.size(); ++i) {
    const auto& b = r.bins[i];
    const double acc = b.accuracy.value_or(0.0);
    const double h = acc * plot;
    const double x = left + static_cast<double>(i) * bar_w;
    // shade by sample share
    const int shade = 230 - static_cast<int>(180.0 * b.proportion);
    svg += "<rect class=\"bar\" x=\"" + fmt(x) + "\" y=\"" + fmt(top + plot - h) + "\" width=\"" +
           fmt(bar_w) + "\" height=\"" + fmt(h) + "\" fill=\"rgb(" + std::to_string(shade) + "," +
           std::to_string(shade) + ",255)\" stroke=\"black\"/>\n";
    svg += "<text class=\"proportion\" x=\"" + fmt(x + bar_w / 2) + "\" y=\"" +
           fmt(top + plot - h - 4) + "\" font-size=\"9\" text-anchor=\"middle\">" +
           fmt(100.0 * b.proportion) + "%</text>\n";
  }
  svg += "<line class=\"diagonal\" x1=\"" + fmt(left) + "\" y1=\"" + fmt(top + plot) + "\" x2=\"" +
         fmt(left + plot) + "\" y2=\"" + fmt(top) + "\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n";
  svg += "<text x=\"" + fmt(left + plot / 2) + "\" y=\"" + fmt(top + plot + 30) +
         "\" font-size=\"12\" text-anchor=\"middle\">confidence</text>\n";
  svg += "<text x=\"15\" y=\"" + fmt(top + plot / 2) + "\" font-size=\"12\" transform=\"rotate(-90 15 " +
         fmt(top + plot / 2) + ")\" text-anchor=\"middle\">accuracy</text>\n";
  svg += "<text x=\"" + fmt(left + plot + 10) + "\" y=\"" + fmt(top + 20) + "\" font-size=\"11\">ECE " +
         fmt(r.ece) + "</text>\n";
  svg += "<text x=\"" + fmt(left + plot + 10) + "\" y=\"" + fmt(top + 36) + "\" font-size=\"11\">Kuiper " +
         fmt(r.kuiper) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

/// Two-column CSV with '.' decimals and LF line endings.
inline std::string render_csv(std::string_view header, const std::vector<std::pair<std::string, double>>& rows) {
  std::string out(header);
  out += '\n';
  for (const auto& [key, value] : rows) {
    out += key;
    out += ',';
    out += io::format_double(value);
    out += '\n';
  }
  return out;
}

}  // namespace judgecal
