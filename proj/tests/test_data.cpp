#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "cpt/data.hpp"
#include "cpt/metrics.hpp"

using namespace cpt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cpt_data_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Full-batch logistic regression on all features; the accuracy-seeking probe.
Labels logistic_probe(const GroupedDataset& ds) {
  const std::size_t d = ds.input_dim();
  Vector w(d + 1, 0.0);
  for (int it = 0; it < 500; ++it) {
    Vector g(d + 1, 0.0);
    for (std::size_t r = 0; r < ds.size(); ++r) {
      double z = w[d];
      for (std::size_t k = 0; k < d; ++k) z += w[k] * ds.x(r, k);
      const double err = 1.0 / (1.0 + std::exp(-z)) - ds.y[r];
      for (std::size_t k = 0; k < d; ++k) g[k] += err * ds.x(r, k);
      g[d] += err;
    }
    for (std::size_t k = 0; k <= d; ++k) w[k] -= 0.5 * g[k] / static_cast<double>(ds.size());
  }
  Labels preds(ds.size());
  for (std::size_t r = 0; r < ds.size(); ++r) {
    double z = w[d];
    for (std::size_t k = 0; k < d; ++k) z += w[k] * ds.x(r, k);
    preds[r] = z > 0.0;
  }
  return preds;
}

GroupedDataset parse(const std::string& text, DatasetSchema schema = {}) {
  std::istringstream in(text);
  return parse_dataset(in, schema);
}

int parse_error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return static_cast<int>(e.line());
  }
  return -1;
}

}  // namespace

TEST(Synthetic, CellCountsAndShape) {
  SynthConfig c;
  c.n_per_group = {10, 20, 30, 40};
  c.input_dim = 5;
  const auto ds = gen_synthetic(c);
  EXPECT_EQ(ds.size(), 100u);
  EXPECT_EQ(ds.input_dim(), 5u);
  const CellCounts counts = ds.group_counts();
  EXPECT_EQ(counts.at({0, 0}), 10u);
  EXPECT_EQ(counts.at({0, 1}), 20u);
  EXPECT_EQ(counts.at({1, 0}), 30u);
  EXPECT_EQ(counts.at({1, 1}), 40u);
}

TEST(Synthetic, Deterministic) {
  SynthConfig c;
  c.n_per_group = {1000, 1000, 1000, 1000};
  c.seed = 9;
  EXPECT_EQ(serialize_dataset(gen_synthetic(c)), serialize_dataset(gen_synthetic(c)));
  SynthConfig other = c;
  other.seed = 10;
  EXPECT_NE(serialize_dataset(gen_synthetic(c)), serialize_dataset(gen_synthetic(other)));
}

TEST(Synthetic, InvalidConfigRejected) {
  SynthConfig c;
  c.n_per_group = {1, 2, 3};
  EXPECT_THROW(gen_synthetic(c), Error);
  c.n_per_group = {1, 2, 3, 4};
  c.label_noise = 0.5;
  EXPECT_THROW(gen_synthetic(c), Error);
  c.label_noise = 0.0;
  c.num_attributes = 1;
  EXPECT_THROW(gen_synthetic(c), Error);
}

TEST(Synthetic, LabelNoiseFlipsRoughlyTheRequestedShare) {
  SynthConfig clean;
  clean.n_per_group = {2000, 2000, 2000, 2000};
  clean.mean_separation = 50.0;
  SynthConfig noisy = clean;
  noisy.label_noise = 0.1;
  const auto ds = gen_synthetic(noisy);
  std::size_t flipped = 0;
  for (std::size_t r = 0; r < ds.size(); ++r) flipped += (ds.x(r, 0) > 25.0) != (ds.y[r] == 1);
  EXPECT_NEAR(static_cast<double>(flipped) / static_cast<double>(ds.size()), 0.1, 0.015);
}

// At n=4000 the sampling noise of the per-group rates alone gives an EODD
// of about 0.03 on average, so single draws are averaged over seeds.
TEST(Synthetic, NoGroupShiftGivesFairOracle) {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig c;
    c.n_per_group = {1000, 1000, 1000, 1000};
    c.group_shift = 0.0;
    c.seed = seed;
    const auto ds = gen_synthetic(c);
    Labels preds(ds.size());
    for (std::size_t r = 0; r < ds.size(); ++r) preds[r] = ds.x(r, 0) > c.mean_separation / 2.0;
    const double gap = eodd(preds, ds.y, ds.a);
    EXPECT_LT(gap, 0.1) << "seed " << seed;
    total += gap;
  }
  EXPECT_LT(total / 5.0, 0.05);
}

TEST(Synthetic, ConflictPresetForcesUnfairAccurateProbe) {
  const auto ds = gen_synthetic(conflict_preset(0));
  EXPECT_EQ(ds.size(), 4000u);
  const Labels preds = logistic_probe(ds);
  EXPECT_GT(accuracy(preds, ds.y), 0.75);
  EXPECT_GT(eodd(preds, ds.y, ds.a), 0.2);
}

TEST(DatasetIo, SaveLoadRoundTrip) {
  TempDir dir;
  auto ds = gen_synthetic(conflict_preset(3));
  ds.split = SplitTag::train;
  const fs::path path = dir.path / "d.csv";
  save_dataset(path, ds, {{"generator", "test"}});
  EXPECT_TRUE(fs::exists(metadata_path(path)));
  EXPECT_FALSE(fs::exists(dir.path / "d.csv.tmp"));
  EXPECT_EQ(load_dataset(path), ds);
  EXPECT_THROW(load_dataset(path, DatasetSchema{4}), SchemaError);
  EXPECT_THROW(load_dataset(dir.path / "missing.csv"), Error);
}

TEST(DatasetIo, AcceptsMatchingHeader) {
  const auto ds = parse("dim=4\n1,2,3,4,1,0\n0.5,-1e-3,2,3,0,1\n", DatasetSchema{4});
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.x(1, 1), -1e-3);
  EXPECT_EQ(ds.y, (Labels{1, 0}));
  EXPECT_EQ(ds.a, (Labels{0, 1}));
}

TEST(DatasetIo, MalformedRowsNameTheLine) {
  EXPECT_EQ(parse_error_line("dim=2\n1,2,0,0\n1,2,3,0,0\n"), 3);
  EXPECT_EQ(parse_error_line("dim=2\n1,2,0,0\n1,x,0,0\n"), 3);
  EXPECT_EQ(parse_error_line("dim=2\n1,nan,0,0\n"), 2);
  EXPECT_EQ(parse_error_line("dim=2\n1,2,0,0\n1,inf,0,0\n"), 3);
  EXPECT_EQ(parse_error_line("dim=2\n1,2,-1,0\n"), 2);
  EXPECT_EQ(parse_error_line("dim=2\n1,2,0,1.5\n"), 2);
  EXPECT_EQ(parse_error_line("dims=2\n"), 1);
  EXPECT_EQ(parse_error_line(""), 1);
  EXPECT_THROW(parse("dim=2\n"), ParseError);
}

TEST(Split, StratifiedPerCell) {
  SynthConfig c;
  c.n_per_group = {100, 100, 100, 100};
  const auto ds = gen_synthetic(c);
  const auto [train, test] = split(ds, 0.25, 1);
  EXPECT_EQ(train.split, SplitTag::train);
  EXPECT_EQ(test.split, SplitTag::test);
  for (const auto& [cell, n] : train.group_counts()) EXPECT_EQ(n, 75u);
  for (const auto& [cell, n] : test.group_counts()) EXPECT_EQ(n, 25u);
}

TEST(Split, PreservesProportionsWithinOneRow) {
  const auto ds = gen_synthetic(conflict_preset(4));
  for (double f : {0.1, 0.25, 0.33}) {
    const auto parts = split(ds, f, 2);
    const auto full = ds.group_counts(), test = parts.test.group_counts();
    for (const auto& [cell, n] : full)
      EXPECT_LE(std::abs(static_cast<double>(test.at(cell)) - f * static_cast<double>(n)), 1.0);
  }
}

TEST(Split, UnionIsOriginalMultiset) {
  const auto ds = gen_synthetic(conflict_preset(5));
  const auto parts = split(ds, 0.3, 7);
  EXPECT_EQ(parts.train.size() + parts.test.size(), ds.size());
  std::multiset<std::string> original, joined;
  auto row_key = [](const GroupedDataset& d, std::size_t r) {
    std::string k;
    for (double v : d.x.row(r)) k += detail::format_double(v) + ",";
    return k + std::to_string(d.y[r]) + "," + std::to_string(d.a[r]);
  };
  for (std::size_t r = 0; r < ds.size(); ++r) original.insert(row_key(ds, r));
  for (const auto* part : {&parts.train, &parts.test})
    for (std::size_t r = 0; r < part->size(); ++r) joined.insert(row_key(*part, r));
  EXPECT_EQ(original, joined);
}

TEST(Split, SeedsChangePartitionButAreDeterministic) {
  const auto ds = gen_synthetic(conflict_preset(6));
  EXPECT_EQ(split(ds, 0.25, 1).test, split(ds, 0.25, 1).test);
  EXPECT_NE(split(ds, 0.25, 1).test, split(ds, 0.25, 2).test);
}

TEST(Split, TinyCellFallsBackToGlobalSplit) {
  set_warning_handler(nullptr);
  SynthConfig c;
  c.n_per_group = {1, 20, 20, 20};
  const auto ds = gen_synthetic(c);
  const auto parts = split(ds, 0.5, 0);
  EXPECT_EQ(parts.train.size() + parts.test.size(), ds.size());
  EXPECT_EQ(parts.test.size(), 31u);  // round(0.5 * 61)
  set_warning_handler(&detail::default_warning_handler);
  EXPECT_THROW(split(ds, 0.0, 0), Error);
  EXPECT_THROW(split(ds, 1.0, 0), Error);
}

TEST(Batches, SizesAndCoverage) {
  SynthConfig c;
  c.n_per_group = {75, 75, 75, 75};
  const auto ds = gen_synthetic(c);
  auto it = batches(ds, 128, 42);
  EXPECT_EQ(it.batch_count(), 3u);
  std::vector<std::size_t> sizes;
  GroupedBatch b;
  std::multiset<int> labels;
  while (it.next(b)) {
    sizes.push_back(b.y.size());
    labels.insert(b.y.begin(), b.y.end());
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{128, 128, 44}));
  EXPECT_EQ(labels, std::multiset<int>(ds.y.begin(), ds.y.end()));

  auto order = it.order();
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
}

TEST(Batches, SeededOrder) {
  const auto ds = gen_synthetic(conflict_preset(0));
  EXPECT_EQ(batches(ds, 128, 1).order(), batches(ds, 128, 1).order());
  EXPECT_NE(batches(ds, 128, 1).order(), batches(ds, 128, 2).order());
  EXPECT_THROW(batches(ds, 0, 1), Error);
}
