#pragma once

// On-disk activation datasets.
//
// A dataset directory holds:
//   manifest.json     dataset-level metadata (DatasetManifest)
//   examples.jsonl    one ExampleMeta per line, in matrix row order
//   layer_<k>.actv    one binary matrix per captured layer
//
// .actv layout, all integers little-endian:
//   bytes 0..3   magic "ACTV"
//   byte  4      version (u8, currently 1)
//   bytes 5..8   hidden_dim (u32)
//   bytes 9..12  row_count (u32)
//   then row_count * hidden_dim IEEE-754 float32 values, row-major
// Total size is exactly 13 + 4 * rows * dim bytes.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "judgecal/error.hpp"
#include "judgecal/io.hpp"
#include "judgecal/random.hpp"
#include "judgecal/verdict.hpp"
#include "json.hpp"

namespace judgecal {

inline constexpr int kFormatVersion = 1;
inline constexpr std::size_t kActvHeaderBytes = 13;

enum class Split { train, val, test, unassigned };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "unassigned") return Split::unassigned;
  throw Error(ErrorCode::invalid_argument, "unknown split '" + std::string(s) + "'");
}

struct DatasetManifest {
  std::string dataset_name;
  std::string model_name;
  std::uint32_t hidden_dim = 0;
  std::uint32_t num_examples = 0;
  std::vector<int> layers;
  int format_version = kFormatVersion;

  bool operator==(const DatasetManifest&) const = default;
};

struct ExampleMeta {
  std::string id;
  std::string subset;
  std::optional<int> label;  // verdict correctness; absent when unlabeled
  Split split = Split::unassigned;
  std::optional<Verdict> verdict;
  std::optional<double> verbalized_confidence;
  // Not part of the core record; lets baseline scoring recover the correct
  // winner for verdicts other than the stored one.
  std::optional<Winner> ground_truth;

  bool operator==(const ExampleMeta&) const = default;
};

class ActivationMatrix {
 public:
  ActivationMatrix() = default;
  ActivationMatrix(int layer, std::size_t rows, std::size_t dim, std::vector<float> values)
      : layer_(layer), rows_(rows), dim_(dim), values_(std::move(values)) {
    detail::require(values_.size() == rows_ * dim_, ErrorCode::dimension_mismatch,
                    "layer " + std::to_string(layer_) + ": value count does not equal rows*dim");
  }

  int layer() const { return layer_; }
  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> values() const { return values_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values_).subspan(i * dim_, dim_);
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
  }

  bool operator==(const ActivationMatrix& other) const {
    // Bit-level comparison, so NaN payloads and -0.0 are not conflated.
    return layer_ == other.layer_ && rows_ == other.rows_ && dim_ == other.dim_ &&
           values_.size() == other.values_.size() &&
           std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0;
  }

 private:
  int layer_ = 0;
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

struct ActivationDataset {
  DatasetManifest manifest;
  std::vector<ExampleMeta> examples;
  std::vector<ActivationMatrix> matrices;

  const ActivationMatrix& layer(int k) const {
    for (const auto& m : matrices) {
      if (m.layer() == k) return m;
    }
    throw Error(ErrorCode::invalid_argument, "layer " + std::to_string(k) + " missing from dataset");
  }

  bool has_layer(int k) const {
    return std::find(manifest.layers.begin(), manifest.layers.end(), k) != manifest.layers.end();
  }

  /// Row indices in `split` that carry a label.
  std::vector<std::size_t> labeled_rows(Split split) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (examples[i].split == split && examples[i].label) rows.push_back(i);
    }
    return rows;
  }

  std::size_t unlabeled_count() const {
    return static_cast<std::size_t>(std::count_if(
        examples.begin(), examples.end(), [](const ExampleMeta& e) { return !e.label; }));
  }
};

// ---------------------------------------------------------------------------
// JSON mapping

inline nlohmann::json to_json(const DatasetManifest& m) {
  return nlohmann::json{{"dataset_name", m.dataset_name}, {"model_name", m.model_name},
                        {"hidden_dim", m.hidden_dim},     {"num_examples", m.num_examples},
                        {"layers", m.layers},             {"format_version", m.format_version}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.dataset_name = j.at("dataset_name").get<std::string>();
    m.model_name = j.at("model_name").get<std::string>();
    m.hidden_dim = j.at("hidden_dim").get<std::uint32_t>();
    m.num_examples = j.at("num_examples").get<std::uint32_t>();
    m.layers = j.at("layers").get<std::vector<int>>();
    m.format_version = j.at("format_version").get<int>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("manifest.json: ") + e.what());
  }
}

inline nlohmann::json to_json(const ExampleMeta& e) {
  nlohmann::json j{{"id", e.id}, {"subset", e.subset}};
  j["label"] = e.label ? nlohmann::json(*e.label) : nlohmann::json(nullptr);
  j["split"] = to_string(e.split);
  if (e.verdict) j["verdict"] = to_json(*e.verdict);
  if (e.verbalized_confidence) j["verbalized_confidence"] = *e.verbalized_confidence;
  if (e.ground_truth) j["ground_truth"] = to_string(*e.ground_truth);
  return j;
}

inline ExampleMeta example_from_json(const nlohmann::json& j) {
  ExampleMeta e;
  e.id = j.at("id").get<std::string>();
  e.subset = j.value("subset", std::string{});
  if (j.contains("label") && !j.at("label").is_null()) e.label = j.at("label").get<int>();
  e.split = parse_split(j.value("split", std::string("unassigned")));
  if (j.contains("verdict") && !j.at("verdict").is_null()) e.verdict = verdict_from_json(j.at("verdict"));
  if (j.contains("verbalized_confidence") && !j.at("verbalized_confidence").is_null()) {
    e.verbalized_confidence = j.at("verbalized_confidence").get<double>();
  }
  if (j.contains("ground_truth") && !j.at("ground_truth").is_null()) {
    e.ground_truth = parse_winner(j.at("ground_truth").get<std::string>());
  }
  return e;
}

/// Content hash of the manifest, used to tie probe artifacts to datasets.
inline std::string manifest_fingerprint(const DatasetManifest& m) {
  return io::hex64(io::fnv1a64(to_json(m).dump()));
}

// ---------------------------------------------------------------------------
// .actv encoding

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

inline std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= std::uint32_t(std::uint8_t(bytes[offset + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline std::string encode_actv(const ActivationMatrix& m) {
  std::string out;
  out.reserve(kActvHeaderBytes + 4 * m.values().size());
  out += "ACTV";
  out += static_cast<char>(kFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(m.dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  for (float f : m.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

/// Decodes and validates one layer file. Does not check NaN; callers do.
inline ActivationMatrix decode_actv(std::string_view bytes, int layer, const std::string& origin) {
  detail::require(bytes.size() >= kActvHeaderBytes, ErrorCode::format,
                  origin + ": truncated file (header)");
  detail::require(bytes.substr(0, 4) == "ACTV", ErrorCode::format, origin + ": bad magic");
  detail::require(std::uint8_t(bytes[4]) == kFormatVersion, ErrorCode::format,
                  origin + ": unsupported version " + std::to_string(std::uint8_t(bytes[4])));
  const std::uint64_t dim = detail::get_u32(bytes, 5);
  const std::uint64_t rows = detail::get_u32(bytes, 9);
  const std::uint64_t expected = kActvHeaderBytes + 4 * rows * dim;
  detail::require(bytes.size() >= expected, ErrorCode::format, origin + ": truncated file");
  detail::require(bytes.size() == expected, ErrorCode::format,
                  origin + ": trailing bytes after declared data");
  std::vector<float> values(rows * dim);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(detail::get_u32(bytes, kActvHeaderBytes + 4 * i));
  }
  return ActivationMatrix(layer, rows, dim, std::move(values));
}

inline std::string layer_filename(int layer) { return "layer_" + std::to_string(layer) + ".actv"; }

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void validate_layers(const std::vector<int>& layers) {
  require(!layers.empty(), ErrorCode::invalid_argument, "no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    require(layers[i] >= 0, ErrorCode::invalid_argument, "negative layer index");
    require(i == 0 || layers[i - 1] < layers[i], ErrorCode::invalid_argument,
            "layers must be unique and sorted ascending");
  }
}

inline void validate_examples(const DatasetManifest& manifest,
                              const std::vector<ExampleMeta>& examples) {
  require(examples.size() == manifest.num_examples, ErrorCode::dimension_mismatch,
          "example count " + std::to_string(examples.size()) + " does not match num_examples " +
              std::to_string(manifest.num_examples));
  std::unordered_set<std::string> ids;
  for (const auto& e : examples) {
    require(ids.insert(e.id).second, ErrorCode::invalid_argument, "duplicate id '" + e.id + "'");
    require(!e.label || *e.label == 0 || *e.label == 1, ErrorCode::invalid_argument,
            "label of '" + e.id + "' must be 0, 1 or null");
    if (e.verbalized_confidence) {
      const double c = *e.verbalized_confidence;
      require(std::isfinite(c) && c >= 0.0 && c <= 1.0, ErrorCode::invalid_argument,
              "verbalized_confidence of '" + e.id + "' outside [0,1]");
    }
  }
}

inline void validate_matrix(const DatasetManifest& manifest, const ActivationMatrix& m) {
  const std::string where = "layer " + std::to_string(m.layer());
  require(m.rows() == manifest.num_examples, ErrorCode::dimension_mismatch,
          where + ": row-count mismatch (" + std::to_string(m.rows()) + " rows, manifest says " +
              std::to_string(manifest.num_examples) + ")");
  require(m.dim() == manifest.hidden_dim, ErrorCode::dimension_mismatch,
          where + ": hidden_dim mismatch (" + std::to_string(m.dim()) + " vs " +
              std::to_string(manifest.hidden_dim) + ")");
  require(m.all_finite(), ErrorCode::non_finite, where + ": NaN or Inf detected");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Directory I/O

inline void write_dataset(const DatasetManifest& manifest, const std::vector<ExampleMeta>& examples,
                          const std::vector<ActivationMatrix>& matrices,
                          const std::filesystem::path& directory) {
  detail::validate_layers(manifest.layers);
  detail::require(manifest.hidden_dim > 0, ErrorCode::invalid_argument, "hidden_dim must be positive");
  detail::require(manifest.num_examples > 0, ErrorCode::invalid_argument,
                  "num_examples must be positive");
  detail::validate_examples(manifest, examples);

  std::vector<const ActivationMatrix*> ordered;
  for (int layer : manifest.layers) {
    const ActivationMatrix* found = nullptr;
    for (const auto& m : matrices) {
      if (m.layer() == layer) {
        detail::require(found == nullptr, ErrorCode::invalid_argument,
                        "duplicate matrix for layer " + std::to_string(layer));
        found = &m;
      }
    }
    detail::require(found != nullptr, ErrorCode::dimension_mismatch,
                    "no matrix for layer " + std::to_string(layer));
    detail::validate_matrix(manifest, *found);
    ordered.push_back(found);
  }
  detail::require(matrices.size() == manifest.layers.size(), ErrorCode::dimension_mismatch,
                  "matrices include layers not listed in the manifest");

  std::filesystem::create_directories(directory);
  io::write_file_atomic(directory / "manifest.json", to_json(manifest).dump(2) + "\n");
  std::vector<nlohmann::json> rows;
  rows.reserve(examples.size());
  for (const auto& e : examples) rows.push_back(to_json(e));
  io::write_file_atomic(directory / "examples.jsonl", io::to_jsonl(rows));
  for (const auto* m : ordered) {
    io::write_file_atomic(directory / layer_filename(m->layer()), encode_actv(*m));
  }
}

inline void write_dataset(const ActivationDataset& ds, const std::filesystem::path& directory) {
  write_dataset(ds.manifest, ds.examples, ds.matrices, directory);
}

inline ActivationDataset read_dataset(const std::filesystem::path& directory) {
  detail::require(std::filesystem::is_directory(directory), ErrorCode::not_found,
                  "dataset not found: " + directory.string());
  const auto manifest_path = directory / "manifest.json";
  detail::require(std::filesystem::exists(manifest_path), ErrorCode::not_found,
                  "dataset not found: missing " + manifest_path.string());

  ActivationDataset ds;
  try {
    ds.manifest = manifest_from_json(nlohmann::json::parse(io::read_file(manifest_path)));
  } catch (const nlohmann::json::parse_error&) {
    throw Error(ErrorCode::format, manifest_path.string() + ": invalid JSON");
  }
  detail::require(ds.manifest.format_version == kFormatVersion, ErrorCode::format,
                  "unsupported format_version " + std::to_string(ds.manifest.format_version));
  detail::validate_layers(ds.manifest.layers);

  for (const auto& row : io::read_jsonl(directory / "examples.jsonl")) {
    try {
      ds.examples.push_back(example_from_json(row));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::format, std::string("examples.jsonl: ") + e.what());
    }
  }
  detail::validate_examples(ds.manifest, ds.examples);

  for (int layer : ds.manifest.layers) {
    const auto path = directory / layer_filename(layer);
    auto m = decode_actv(io::read_file(path), layer, path.string());
    detail::validate_matrix(ds.manifest, m);
    ds.matrices.push_back(std::move(m));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitStrategy { plain, stratified_by_subset };

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

inline SplitCounts split_counts(std::size_t n, double train_fraction, double val_fraction) {
  SplitCounts c;
  c.train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  c.val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  c.test = n - c.train - c.val;
  return c;
}

/// Seeded partition into train/val/test. Counts follow floor(fraction * n)
/// with the remainder going to test; under stratified_by_subset the rule is
/// applied within each subset.
inline std::vector<ExampleMeta> assign_splits(std::vector<ExampleMeta> examples,
                                              double train_fraction, double val_fraction,
                                              std::uint64_t seed,
                                              SplitStrategy strategy = SplitStrategy::plain) {
  auto in_open_unit = [](double f) { return std::isfinite(f) && f > 0.0 && f < 1.0; };
  detail::require(in_open_unit(train_fraction) && in_open_unit(val_fraction) &&
                      train_fraction + val_fraction <= 1.0,
                  ErrorCode::invalid_argument,
                  "split fractions must lie in (0,1) with train + val <= 1");

  auto assign_group = [&](const std::vector<std::size_t>& members, std::uint64_t group_seed) {
    const auto order = shuffled_indices(members.size(), group_seed);
    const auto counts = split_counts(members.size(), train_fraction, val_fraction);
    for (std::size_t k = 0; k < order.size(); ++k) {
      Split s = k < counts.train ? Split::train
                : k < counts.train + counts.val ? Split::val
                                                : Split::test;
      examples[members[order[k]]].split = s;
    }
  };

  if (strategy == SplitStrategy::plain) {
    std::vector<std::size_t> all(examples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    assign_group(all, seed);
  } else {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < examples.size(); ++i) groups[examples[i].subset].push_back(i);
    // Per-subset seeds come from one stream so group order (sorted by name)
    // fixes the result.
    Rng seeder(seed);
    for (const auto& [name, members] : groups) assign_group(members, seeder.next());
  }
  return examples;
}

}  // namespace judgecal
