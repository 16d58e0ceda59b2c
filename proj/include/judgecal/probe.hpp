#pragma once

// Linear confidence probes over one layer of judge activations.
//
// The probe is an affine map z = w.x + b. Its confidence is z clamped to
// [0,1]. Training minimizes the mean of a per-example loss over mini-batches
// with decoupled weight decay. The loss sees clamp(z, 0, 1) for brier and
// clamp(z, eps, 1-eps) for focal/bce. Gradients pass straight through the
// clamp, so an example whose logit leaves [0,1] on the wrong side still
// pulls it back.

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <future>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "judgecal/activation_store.hpp"
#include "judgecal/calibration.hpp"
#include "judgecal/error.hpp"
#include "judgecal/io.hpp"
#include "judgecal/losses.hpp"
#include "judgecal/random.hpp"
#include "json.hpp"

namespace judgecal {

enum class Optimizer { adam_decoupled, sgd };

inline std::string_view to_string(Optimizer o) {
  return o == Optimizer::sgd ? "sgd" : "adam_decoupled";
}

inline Optimizer parse_optimizer(std::string_view s) {
  if (s == "adam_decoupled" || s == "adamw") return Optimizer::adam_decoupled;
  if (s == "sgd") return Optimizer::sgd;
  throw Error(ErrorCode::invalid_argument, "unknown optimizer '" + std::string(s) + "'");
}

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::size_t batch_size = 4;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam_decoupled;

  bool operator==(const TrainConfig&) const = default;
};

// Adam moments, fixed.
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

inline void validate(const TrainConfig& c) {
  detail::require(std::isfinite(c.learning_rate) && c.learning_rate >= 0.0,
                  ErrorCode::invalid_argument, "learning_rate must be >= 0");
  detail::require(std::isfinite(c.weight_decay) && c.weight_decay >= 0.0,
                  ErrorCode::invalid_argument, "weight_decay must be >= 0");
  detail::require(c.batch_size > 0, ErrorCode::invalid_argument, "batch_size must be > 0");
  detail::require(c.epochs > 0, ErrorCode::invalid_argument, "epochs must be > 0");
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;

  bool operator==(const EpochLog&) const = default;
};

struct ProbeModel {
  int layer = 0;
  std::vector<double> weights;
  double bias = 0.0;
  LossSpec loss_spec;
  TrainConfig train_config;
  std::vector<EpochLog> training_log;
  std::string dataset_fingerprint;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t hidden_dim() const { return weights.size(); }

  bool operator==(const ProbeModel& o) const {
    auto bits_equal = [](double a, double b) {
      return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
    };
    if (weights.size() != o.weights.size()) return false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!bits_equal(weights[i], o.weights[i])) return false;
    }
    return layer == o.layer && bits_equal(bias, o.bias) && loss_spec == o.loss_spec &&
           train_config == o.train_config && training_log == o.training_log &&
           dataset_fingerprint == o.dataset_fingerprint && metadata == o.metadata;
  }
};

/// w.x + b before clamping.
template <std::floating_point T>
double raw_output(const ProbeModel& model, std::span<const T> activation) {
  double z = model.bias;
  for (std::size_t i = 0; i < activation.size(); ++i) {
    z += model.weights[i] * static_cast<double>(activation[i]);
  }
  return z;
}

template <std::floating_point T>
double predict_confidence(const ProbeModel& model, std::span<const T> activation) {
  detail::require(activation.size() == model.weights.size(), ErrorCode::dimension_mismatch,
                  "activation length " + std::to_string(activation.size()) +
                      " does not match probe hidden_dim " + std::to_string(model.weights.size()));
  for (T v : activation) {
    detail::require(std::isfinite(v), ErrorCode::non_finite, "activation contains NaN or Inf");
  }
  return std::clamp(raw_output(model, activation), 0.0, 1.0);
}

template <std::floating_point T>
double predict_confidence(const ProbeModel& model, const std::vector<T>& activation) {
  return predict_confidence(model, std::span<const T>(activation));
}

namespace detail {

inline double loss_input(const LossSpec& spec, double z) {
  // focal/bce clamp to [eps, 1-eps] inside loss_and_gradient
  return spec.kind == LossKind::brier ? std::clamp(z, 0.0, 1.0) : z;
}

inline double mean_loss(const ProbeModel& model, const ActivationMatrix& matrix,
                        const std::vector<ExampleMeta>& examples,
                        const std::vector<std::size_t>& rows) {
  double total = 0.0;
  for (std::size_t r : rows) {
    const double z = raw_output(model, matrix.row(r));
    total += loss_and_gradient(model.loss_spec, loss_input(model.loss_spec, z), *examples[r].label).loss;
  }
  return total / static_cast<double>(rows.size());
}

class ParameterUpdater {
 public:
  ParameterUpdater(const TrainConfig& config, std::size_t dim)
      : config_(config), m_(dim + 1, 0.0), v_(dim + 1, 0.0) {}

  // grad holds the weight gradients followed by the bias gradient.
  void step(std::vector<double>& weights, double& bias, const std::vector<double>& grad) {
    ++t_;
    const double lr = config_.learning_rate;
    const double decay = 1.0 - lr * config_.weight_decay;
    const std::size_t dim = weights.size();
    if (config_.optimizer == Optimizer::sgd) {
      for (std::size_t i = 0; i < dim; ++i) weights[i] = weights[i] * decay - lr * grad[i];
      bias -= lr * grad[dim];
      return;
    }
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
    auto adam_delta = [&](std::size_t i) {
      m_[i] = kAdamBeta1 * m_[i] + (1.0 - kAdamBeta1) * grad[i];
      v_[i] = kAdamBeta2 * v_[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
      return lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kAdamEpsilon);
    };
    for (std::size_t i = 0; i < dim; ++i) {
      weights[i] *= decay;
      weights[i] -= adam_delta(i);
    }
    bias -= adam_delta(dim);  // no decay on the bias
  }

 private:
  TrainConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

}  // namespace detail

inline ProbeModel train_probe(const ActivationDataset& dataset, int layer, const LossSpec& spec,
                              const TrainConfig& config) {
  validate(spec);
  validate(config);
  detail::require(dataset.has_layer(layer), ErrorCode::invalid_argument,
                  "layer " + std::to_string(layer) + " missing from dataset");
  const ActivationMatrix& matrix = dataset.layer(layer);
  const auto train_rows = dataset.labeled_rows(Split::train);
  const auto val_rows = dataset.labeled_rows(Split::val);
  detail::require(!train_rows.empty(), ErrorCode::degenerate_input, "train split is empty");
  std::size_t positives = 0;
  for (std::size_t r : train_rows) positives += static_cast<std::size_t>(*dataset.examples[r].label);
  detail::require(positives > 0 && positives < train_rows.size(), ErrorCode::degenerate_input,
                  "single-class training set");

  const std::size_t dim = matrix.dim();
  ProbeModel model;
  model.layer = layer;
  model.weights.assign(dim, 0.0);
  model.bias = 0.0;
  model.loss_spec = spec;
  model.train_config = config;
  model.dataset_fingerprint = manifest_fingerprint(dataset.manifest);

  detail::ParameterUpdater updater(config, dim);
  std::vector<double> grad(dim + 1);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(train_rows.size(), config.seed + epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t r = train_rows[order[k]];
        const auto x = matrix.row(r);
        const double z = raw_output(model, x);
        const auto lv = loss_and_gradient(spec, detail::loss_input(spec, z), *dataset.examples[r].label);
        epoch_loss += lv.loss;
        const double g = lv.gradient * inv_batch;
        for (std::size_t i = 0; i < dim; ++i) grad[i] += g * static_cast<double>(x[i]);
        grad[dim] += g;
      }
      updater.step(model.weights, model.bias, grad);
    }
    EpochLog log;
    log.epoch = epoch + 1;
    log.train_loss = epoch_loss / static_cast<double>(train_rows.size());
    if (!val_rows.empty()) log.val_loss = detail::mean_loss(model, matrix, dataset.examples, val_rows);
    model.training_log.push_back(log);
  }
  return model;
}

/// Scores the labeled rows of `split` (all splits when nullopt).
inline std::vector<PredictionRecord> predict_records(const ProbeModel& model,
                                                     const ActivationDataset& dataset,
                                                     std::optional<Split> split) {
  detail::require(model.hidden_dim() == dataset.manifest.hidden_dim, ErrorCode::dimension_mismatch,
                  "hidden_dim mismatch: probe has " + std::to_string(model.hidden_dim()) +
                      ", dataset has " + std::to_string(dataset.manifest.hidden_dim));
  const ActivationMatrix& matrix = dataset.layer(model.layer);
  std::vector<PredictionRecord> records;
  for (std::size_t r = 0; r < dataset.examples.size(); ++r) {
    const auto& e = dataset.examples[r];
    if (!e.label || (split && e.split != *split)) continue;
    records.push_back({predict_confidence(model, matrix.row(r)), *e.label, "probe"});
  }
  return records;
}

// ---------------------------------------------------------------------------
// Layer sweep

enum class SelectionMetric { val_brier, val_kuiper };

inline std::string_view to_string(SelectionMetric m) {
  return m == SelectionMetric::val_kuiper ? "val_kuiper" : "val_brier";
}

inline SelectionMetric parse_selection_metric(std::string_view s) {
  if (s == "val_brier") return SelectionMetric::val_brier;
  if (s == "val_kuiper") return SelectionMetric::val_kuiper;
  throw Error(ErrorCode::invalid_argument, "unknown selection metric '" + std::string(s) + "'");
}

struct LayerScore {
  int layer = 0;
  double val_metric = 0.0;
};

struct SweepResult {
  ProbeModel best;
  std::vector<LayerScore> per_layer;
};

inline double selection_score(const std::vector<PredictionRecord>& val, SelectionMetric metric) {
  return metric == SelectionMetric::val_kuiper ? kuiper(val) : brier_score(val);
}

/// Trains one probe per layer (seed + layer for each) and keeps the one with
/// the lowest validation metric; ties go to the lower layer index.
/// Parallel runs give the same result as sequential ones.
inline SweepResult sweep_layers(const ActivationDataset& dataset, std::vector<int> layers,
                                const LossSpec& spec, const TrainConfig& config,
                                SelectionMetric metric = SelectionMetric::val_brier,
                                unsigned threads = 1) {
  detail::require(!layers.empty(), ErrorCode::invalid_argument, "no layers to sweep");
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  detail::require(!dataset.labeled_rows(Split::val).empty(), ErrorCode::degenerate_input,
                  "val split is empty");

  struct Trained {
    ProbeModel model;
    double score = 0.0;
  };
  auto run = [&](int layer) {
    TrainConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(layer);
    Trained t{train_probe(dataset, layer, spec, c), 0.0};
    t.score = selection_score(predict_records(t.model, dataset, Split::val), metric);
    return t;
  };

  std::vector<Trained> results(layers.size());
  threads = std::max(1u, threads);
  for (std::size_t start = 0; start < layers.size(); start += threads) {
    const std::size_t end = std::min(layers.size(), start + threads);
    if (threads == 1) {
      results[start] = run(layers[start]);
      continue;
    }
    std::vector<std::future<Trained>> pending;
    for (std::size_t i = start; i < end; ++i) {
      pending.push_back(std::async(std::launch::async, run, layers[i]));
    }
    for (std::size_t i = start; i < end; ++i) results[i] = pending[i - start].get();
  }

  SweepResult out;
  std::size_t best = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    out.per_layer.push_back({layers[i], results[i].score});
    if (results[i].score < results[best].score) best = i;
  }
  out.best = std::move(results[best].model);
  out.best.metadata["selection_metric"] = to_string(metric);
  out.best.metadata["selected_layer"] = out.best.layer;
  out.best.metadata["selection_value"] = results[best].score;
  return out;
}

// ---------------------------------------------------------------------------
// Artifact

inline nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"learning_rate", c.learning_rate},
                        {"weight_decay", c.weight_decay},
                        {"batch_size", c.batch_size},
                        {"epochs", c.epochs},
                        {"seed", c.seed},
                        {"optimizer", to_string(c.optimizer)},
                        {"generator", kGeneratorName}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  return c;
}

namespace detail {

inline std::string encode_f64(std::span<const double> values) {
  std::string bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes += static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  return io::base64_encode(bytes);
}

inline std::vector<double> decode_f64(std::string_view text) {
  const std::string bytes = io::base64_decode(text);
  require(bytes.size() % 8 == 0, ErrorCode::format, "float64 payload length not a multiple of 8");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= std::uint64_t(std::uint8_t(bytes[k * 8 + static_cast<std::size_t>(i)])) << (8 * i);
    }
    values[k] = std::bit_cast<double>(bits);
  }
  return values;
}

}  // namespace detail

inline constexpr const char* kProbeFormat = "judgecal-probe";

inline nlohmann::json to_json(const ProbeModel& m) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : m.training_log) {
    log.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"val_loss", e.val_loss ? nlohmann::json(*e.val_loss) : nlohmann::json(nullptr)}});
  }
  const double bias[1] = {m.bias};
  return nlohmann::json{{"format", kProbeFormat},
                        {"format_version", 1},
                        {"layer", m.layer},
                        {"hidden_dim", m.weights.size()},
                        {"loss_spec", to_json(m.loss_spec)},
                        {"train_config", to_json(m.train_config)},
                        {"training_log", std::move(log)},
                        {"weights_f64le_base64", detail::encode_f64(m.weights)},
                        {"bias_f64le_base64", detail::encode_f64(bias)},
                        {"dataset_fingerprint", m.dataset_fingerprint},
                        {"metadata", m.metadata}};
}

inline ProbeModel probe_from_json(const nlohmann::json& j) {
  try {
    detail::require(j.value("format", std::string{}) == kProbeFormat, ErrorCode::format,
                    "not a probe artifact");
    ProbeModel m;
    m.layer = j.at("layer").get<int>();
    m.loss_spec = loss_spec_from_json(j.at("loss_spec"));
    m.train_config = train_config_from_json(j.at("train_config"));
    for (const auto& e : j.at("training_log")) {
      EpochLog log{e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(), std::nullopt};
      if (!e.at("val_loss").is_null()) log.val_loss = e.at("val_loss").get<double>();
      m.training_log.push_back(log);
    }
    m.weights = detail::decode_f64(j.at("weights_f64le_base64").get<std::string>());
    const auto bias = detail::decode_f64(j.at("bias_f64le_base64").get<std::string>());
    detail::require(bias.size() == 1, ErrorCode::format, "bias payload must hold one value");
    m.bias = bias[0];
    detail::require(m.weights.size() == j.at("hidden_dim").get<std::size_t>(), ErrorCode::format,
                    "weights length does not match hidden_dim");
    m.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
    m.metadata = j.value("metadata", nlohmann::json::object());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("probe artifact: ") + e.what());
  }
}

inline ProbeModel read_probe(const std::filesystem::path& path) {
  try {
    return probe_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error&) {
    throw Error(ErrorCode::format, path.string() + ": invalid JSON");
  }
}

inline void write_probe(const ProbeModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, to_json(model).dump(2) + "\n");
}

}  // namespace judgecal
