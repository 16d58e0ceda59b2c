#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "judgecal/error.hpp"
#include "json.hpp"

namespace judgecal {

enum class LossKind { brier, focal, bce };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::brier: return "brier";
    case LossKind::focal: return "focal";
    case LossKind::bce: return "bce";
  }
  return "brier";
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "brier" || s == "mse") return LossKind::brier;
  if (s == "focal") return LossKind::focal;
  if (s == "bce") return LossKind::bce;
  throw Error(ErrorCode::invalid_argument, "unknown loss '" + std::string(s) + "'");
}

/// alpha and gamma only matter for focal loss.
struct LossSpec {
  LossKind kind = LossKind::brier;
  double alpha = 0.25;
  double gamma = 2.0;

  bool operator==(const LossSpec&) const = default;
};

inline void validate(const LossSpec& spec) {
  if (spec.kind != LossKind::focal) return;
  detail::require(spec.alpha >= 0.0 && spec.alpha <= 1.0, ErrorCode::invalid_argument,
                  "focal alpha must lie in [0,1]");
  detail::require(spec.gamma >= 0.0 && std::isfinite(spec.gamma), ErrorCode::invalid_argument,
                  "focal gamma must be >= 0");
}

inline nlohmann::json to_json(const LossSpec& s) {
  nlohmann::json j{{"kind", to_string(s.kind)}};
  if (s.kind == LossKind::focal) {
    j["alpha"] = s.alpha;
    j["gamma"] = s.gamma;
  }
  return j;
}

inline LossSpec loss_spec_from_json(const nlohmann::json& j) {
  LossSpec s;
  s.kind = parse_loss_kind(j.at("kind").get<std::string>());
  if (s.kind == LossKind::focal) {
    s.alpha = j.at("alpha").get<double>();
    s.gamma = j.at("gamma").get<double>();
  }
  return s;
}

/// Probability clamp applied before the logs of focal and bce.
inline constexpr double kLogClampEpsilon = 1e-7;

struct LossValue {
  double loss = 0.0;
  double gradient = 0.0;  // d loss / d prediction
};

namespace detail {

// Focal loss:
//   -alpha * y * (1-p)^gamma * ln p  -  (1-alpha) * (1-y) * p^gamma * ln(1-p)
inline LossValue focal(double p, int y, double alpha, double gamma) {
  const double q = 1.0 - p;
  if (y == 1) {
    const double mod = std::pow(q, gamma);
    const double dmod = gamma == 0.0 ? 0.0 : -gamma * std::pow(q, gamma - 1.0);
    const double lp = std::log(p);
    return {-alpha * mod * lp, -alpha * (dmod * lp + mod / p)};
  }
  const double mod = std::pow(p, gamma);
  const double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(p, gamma - 1.0);
  const double lq = std::log(q);
  return {-(1.0 - alpha) * mod * lq, -(1.0 - alpha) * (dmod * lq - mod / q)};
}

}  // namespace detail

/// Per-example loss and its derivative with respect to the prediction.
/// Focal and bce clamp the prediction to [eps, 1-eps]; brier evaluates the
/// squared error as given.
inline LossValue loss_and_gradient(const LossSpec& spec, double prediction, int label) {
  detail::require(label == 0 || label == 1, ErrorCode::invalid_argument, "label must be 0 or 1");
  detail::require(std::isfinite(prediction), ErrorCode::non_finite, "prediction is not finite");
  switch (spec.kind) {
    case LossKind::brier: {
      const double diff = prediction - label;
      return {diff * diff, 2.0 * diff};
    }
    case LossKind::focal: {
      const double p = std::clamp(prediction, kLogClampEpsilon, 1.0 - kLogClampEpsilon);
      return detail::focal(p, label, spec.alpha, spec.gamma);
    }
    case LossKind::bce: {
      const double p = std::clamp(prediction, kLogClampEpsilon, 1.0 - kLogClampEpsilon);
      if (label == 1) return {-std::log(p), -1.0 / p};
      return {-std::log1p(-p), 1.0 / (1.0 - p)};
    }
  }
  return {};
}

}  // namespace judgecal
