#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "judgecal/activation_store.hpp"
#include "test_support.hpp"

namespace judgecal {
namespace {

using testing::scratch_dir;

ActivationDataset tiny_dataset() {
  ActivationDataset ds;
  ds.manifest = {"tiny", "toy-model", 3, 2, {0}, kFormatVersion};
  ExampleMeta a;
  a.id = "a";
  a.subset = "math";
  a.label = 1;
  a.split = Split::train;
  a.verdict = Verdict{Formulation::PaV, Winner::A, std::nullopt, std::nullopt};
  a.verbalized_confidence = 0.85;
  ExampleMeta b;
  b.id = "b";
  b.subset = "chat";
  b.ground_truth = Winner::B;
  ds.examples = {a, b};
  ds.matrices.emplace_back(0, 2, 3, std::vector<float>{1.0f, -2.0f, 0.5f, 3.25f, -0.0f, 1e-30f});
  return ds;
}

TEST(ActvFormat, LayerFileHasHeaderPlusFloats) {
  const auto dir = scratch_dir("actv_size");
  write_dataset(tiny_dataset(), dir);
  // 13-byte header + 2 rows * 3 dims * 4 bytes
  EXPECT_EQ(std::filesystem::file_size(dir / "layer_0.actv"), 13u + 2u * 3u * 4u);
}

TEST(ActvFormat, HeaderAndPayloadAreLittleEndian) {
  const std::string bytes = encode_actv(ActivationMatrix(7, 1, 2, {1.0f, -2.0f}));
  const std::string expected{"ACTV\x01"
                             "\x02\x00\x00\x00"
                             "\x01\x00\x00\x00"
                             "\x00\x00\x80\x3f"
                             "\x00\x00\x00\xc0",
                             21};
  EXPECT_EQ(bytes, expected);
}

TEST(ActivationStore, RoundTripIsBitExact) {
  const auto dir = scratch_dir("roundtrip");
  const auto ds = tiny_dataset();
  write_dataset(ds, dir);
  const auto back = read_dataset(dir);
  EXPECT_EQ(back.manifest, ds.manifest);
  EXPECT_EQ(back.examples, ds.examples);
  ASSERT_EQ(back.matrices.size(), 1u);
  EXPECT_EQ(back.matrices[0], ds.matrices[0]);
  EXPECT_TRUE(std::signbit(back.matrices[0].row(1)[1]));
}

TEST(ActivationStore, RoundTripProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    const std::size_t dim = 1 + rng.below(17);
    auto data = testing::make_logistic_data(n, dim, 100 + trial, 0.3, 1 + static_cast<int>(rng.below(3)));
    if (trial % 3 == 0) data.dataset.examples[0].label.reset();
    const auto dir = scratch_dir("roundtrip_prop");
    write_dataset(data.dataset, dir);
    const auto back = read_dataset(dir);
    EXPECT_EQ(back.manifest, data.dataset.manifest);
    EXPECT_EQ(back.examples, data.dataset.examples);
    ASSERT_EQ(back.matrices.size(), data.dataset.matrices.size());
    for (std::size_t k = 0; k < back.matrices.size(); ++k) EXPECT_EQ(back.matrices[k], data.dataset.matrices[k]);
  }
}

TEST(ActivationStore, WriteRejectsBadInput) {
  const auto dir = scratch_dir("write_errors");
  auto ds = tiny_dataset();
  ds.manifest.layers.clear();
  try {
    write_dataset(ds, dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no layers");
  }

  ds = tiny_dataset();
  ds.examples[1].id = "a";
  EXPECT_THROW(write_dataset(ds, dir), Error);

  ds = tiny_dataset();
  ds.manifest.hidden_dim = 4;
  EXPECT_THROW(write_dataset(ds, dir), Error);

  ds = tiny_dataset();
  ds.matrices[0] = ActivationMatrix(0, 2, 3, {1, 2, 3, 4, std::numeric_limits<float>::quiet_NaN(), 6});
  try {
    write_dataset(ds, dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_finite);
  }

  ds = tiny_dataset();
  ds.manifest.layers = {0, 1};
  EXPECT_THROW(write_dataset(ds, dir), Error);  // no matrix for layer 1
}

void overwrite(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TEST(ActivationStore, ReadRejectsCorruption) {
  const auto dir = scratch_dir("corrupt");
  write_dataset(tiny_dataset(), dir);
  const auto layer = dir / "layer_0.actv";
  const std::string good = io::read_file(layer);

  auto expect_message = [&](const std::string& needle) {
    try {
      read_dataset(dir);
      FAIL() << "expected failure containing " << needle;
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };

  std::string bad = good;
  bad[0] = 'X';
  overwrite(layer, bad);
  expect_message("bad magic");

  bad = good;
  bad[4] = 2;
  overwrite(layer, bad);
  expect_message("unsupported version");

  overwrite(layer, good.substr(0, good.size() - 1));
  expect_message("truncated");

  overwrite(layer, good + "x");
  expect_message("trailing bytes");

  // a well-formed file with one row fewer than the manifest declares
  overwrite(layer, encode_actv(ActivationMatrix(0, 1, 3, {1, 2, 3})));
  expect_message("row-count mismatch");

  overwrite(layer, encode_actv(ActivationMatrix(0, 2, 3, {1, 2, 3, 4, std::numeric_limits<float>::infinity(), 6})));
  expect_message("NaN");
}

TEST(ActivationStore, ManifestSaysMoreRowsThanFile) {
  const auto dir = scratch_dir("rows100");
  ActivationDataset ds;
  ds.manifest = {"d", "m", 2, 100, {0}, kFormatVersion};
  for (int i = 0; i < 100; ++i) ds.examples.push_back(ExampleMeta{"e" + std::to_string(i), "", 1, Split::train, {}, {}, {}});
  ds.matrices.emplace_back(0, 100, 2, std::vector<float>(200, 0.5f));
  write_dataset(ds, dir);
  overwrite(dir / "layer_0.actv", encode_actv(ActivationMatrix(0, 99, 2, std::vector<float>(198, 0.5f))));
  try {
    read_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row-count mismatch"), std::string::npos);
  }
}

TEST(ActivationStore, MissingDirectory) {
  try {
    read_dataset("/nonexistent/judgecal/dataset");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
    EXPECT_NE(std::string(e.what()).find("dataset not found"), std::string::npos);
  }
}

TEST(ActivationStore, ReadRejectsUnsortedLayers) {
  const auto dir = scratch_dir("unsorted");
  write_dataset(tiny_dataset(), dir);
  auto manifest = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  manifest["layers"] = {0, 0};
  overwrite(dir / "manifest.json", manifest.dump());
  EXPECT_THROW(read_dataset(dir), Error);
}

TEST(ActivationStore, UnlabeledExamplesLoadAndAreCounted) {
  const auto dir = scratch_dir("unlabeled");
  write_dataset(tiny_dataset(), dir);
  const auto ds = read_dataset(dir);
  EXPECT_EQ(ds.unlabeled_count(), 1u);
  EXPECT_EQ(ds.labeled_rows(Split::train).size(), 1u);
  EXPECT_TRUE(ds.labeled_rows(Split::unassigned).empty());
}

std::vector<ExampleMeta> n_examples(std::size_t n) {
  std::vector<ExampleMeta> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = std::to_string(i);
    out[i].subset = i % 3 == 0 ? "a" : "b";
    out[i].label = static_cast<int>(i % 2);
  }
  return out;
}

std::map<Split, std::size_t> count_splits(const std::vector<ExampleMeta>& ex) {
  std::map<Split, std::size_t> c;
  for (const auto& e : ex) ++c[e.split];
  return c;
}

TEST(Splits, FloorRuleCounts) {
  const auto c = count_splits(assign_splits(n_examples(10), 0.8, 0.1, 3));
  EXPECT_EQ(c.at(Split::train), 8u);
  EXPECT_EQ(c.at(Split::val), 1u);
  EXPECT_EQ(c.at(Split::test), 1u);
}

TEST(Splits, DeterministicUnderSeed) {
  EXPECT_EQ(assign_splits(n_examples(50), 0.6, 0.2, 9), assign_splits(n_examples(50), 0.6, 0.2, 9));
  EXPECT_NE(assign_splits(n_examples(50), 0.6, 0.2, 9), assign_splits(n_examples(50), 0.6, 0.2, 10));
}

TEST(Splits, RejectsOutOfRangeFractions) {
  EXPECT_THROW(assign_splits(n_examples(10), 1.0, 0.1, 0), Error);
  EXPECT_THROW(assign_splits(n_examples(10), 0.0, 0.1, 0), Error);
  EXPECT_THROW(assign_splits(n_examples(10), 0.7, 0.4, 0), Error);
  EXPECT_THROW(assign_splits(n_examples(10), 0.5, -0.1, 0), Error);
}

TEST(Splits, PartitionProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    const double tf = 0.05 + 0.8 * rng.uniform();
    const double vf = (1.0 - tf) * (0.05 + 0.9 * rng.uniform());
    const auto out = assign_splits(n_examples(n), tf, vf, rng.next());
    const auto c = count_splits(out);
    const auto expected = split_counts(n, tf, vf);
    auto get = [&](Split s) { return c.count(s) ? c.at(s) : 0u; };
    EXPECT_EQ(get(Split::train), expected.train);
    EXPECT_EQ(get(Split::val), expected.val);
    EXPECT_EQ(get(Split::test), expected.test);
    EXPECT_EQ(get(Split::unassigned), 0u);
    EXPECT_EQ(get(Split::train) + get(Split::val) + get(Split::test), n);
  }
}

TEST(Splits, BothClassesInNonTinySplits) {
  const auto out = assign_splits(n_examples(1000), 0.8, 0.1, 1);
  for (Split s : {Split::train, Split::val, Split::test}) {
    int pos = 0, neg = 0;
    for (const auto& e : out) {
      if (e.split != s) continue;
      (*e.label ? pos : neg)++;
    }
    EXPECT_GT(pos, 0);
    EXPECT_GT(neg, 0);
  }
}

TEST(Splits, StratifiedAppliesFloorRulePerSubset) {
  const auto out = assign_splits(n_examples(30), 0.5, 0.2, 4, SplitStrategy::stratified_by_subset);
  std::map<std::string, std::map<Split, std::size_t>> per;
  for (const auto& e : out) ++per[e.subset][e.split];
  // subset a has 10 members, b has 20
  EXPECT_EQ(per["a"][Split::train], 5u);
  EXPECT_EQ(per["a"][Split::val], 2u);
  EXPECT_EQ(per["a"][Split::test], 3u);
  EXPECT_EQ(per["b"][Split::train], 10u);
  EXPECT_EQ(per["b"][Split::val], 4u);
  EXPECT_EQ(per["b"][Split::test], 6u);
}

TEST(Fingerprint, ChangesWithManifest) {
  auto ds = tiny_dataset();
  const auto fp = manifest_fingerprint(ds.manifest);
  EXPECT_EQ(fp.size(), 16u);
  ds.manifest.dataset_name = "other";
  EXPECT_NE(manifest_fingerprint(ds.manifest), fp);
}

}  // namespace
}  // namespace judgecal
