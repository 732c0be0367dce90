#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "dmfbs/metadata/batch.hpp"
#include "dmfbs/metadata/meta_dataset.hpp"
#include "dmfbs/metadata/space.hpp"

using namespace dmfbs;
namespace fs = std::filesystem;

namespace {

Dataset toy(const std::string& id, std::size_t rows, std::size_t features, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.id = id;
  d.rows = rows;
  d.features = features;
  d.num_classes = classes;
  std::normal_distribution<float> n(0, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t f = 0; f < features; ++f) d.x.push_back(n(rng));
    d.y.push_back(static_cast<int>(i % static_cast<std::size_t>(classes)));
    d.split.push_back(i % 5 == 3 ? Split::Valid : (i % 5 == 4 ? Split::Test : Split::Train));
  }
  return d;
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("d" + std::to_string(i));
  return out;
}

}  // namespace

TEST(Grid, SizesPerSpace) {
  EXPECT_EQ(enumerate_grid(SearchSpace::named(SpaceName::Layout)).size(), 256u);
  EXPECT_EQ(enumerate_grid(SearchSpace::named(SpaceName::Regularization)).size(), 288u);
  EXPECT_EQ(enumerate_grid(SearchSpace::named(SpaceName::Optimization)).size(), 324u);
}

TEST(Grid, StableIdsAndInjectiveEncoding) {
  for (auto n : {SpaceName::Layout, SpaceName::Regularization, SpaceName::Optimization}) {
    const auto s = SearchSpace::named(n);
    const auto a = enumerate_grid(s);
    const auto b = enumerate_grid(s);
    std::set<std::vector<float>> enc;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].id, static_cast<int>(i));
      EXPECT_EQ(a[i].raw, b[i].raw);
      EXPECT_EQ(a[i].encoded, b[i].encoded);
      enc.insert(a[i].encoded);
    }
    EXPECT_EQ(enc.size(), a.size());
  }
}

TEST(Grid, EncodedSegmentsAreValid) {
  const auto s = SearchSpace::named(SpaceName::Regularization);
  for (const auto& c : enumerate_grid(s)) {
    for (const auto& seg : encoding_schema(s)) {
      if (seg.one_hot) {
        float total = 0;
        for (std::size_t i = 0; i < seg.width; ++i) total += c.encoded[seg.offset + i];
        EXPECT_EQ(total, 1.0f);
      } else {
        EXPECT_GE(c.encoded[seg.offset], 0.0f);
        EXPECT_LE(c.encoded[seg.offset], 1.0f);
      }
    }
  }
}

TEST(Grid, JsonRoundTrip) {
  const auto s = SearchSpace::named(SpaceName::Optimization);
  const auto g = enumerate_grid(s);
  const auto back = grid_from_json(grid_to_json(s, g));
  ASSERT_EQ(back.size(), g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(back[i].id, g[i].id);
    EXPECT_EQ(back[i].raw, g[i].raw);
    EXPECT_EQ(back[i].encoded, g[i].encoded);
  }
}

TEST(Layout, PaperExamplesFourNeuronsFiveLayers) {
  EXPECT_EQ(expand_layout(Layout::Square, 4, 5), (std::vector<int>{4, 4, 4, 4, 4}));
  EXPECT_EQ(expand_layout(Layout::Lhd, 4, 5), (std::vector<int>{4, 8, 16, 32, 64}));
  EXPECT_EQ(expand_layout(Layout::Rhd, 4, 5), (std::vector<int>{64, 32, 16, 8, 4}));
  EXPECT_EQ(expand_layout(Layout::Diamond, 4, 5), (std::vector<int>{4, 8, 16, 8, 4}));
  EXPECT_EQ(expand_layout(Layout::Triangle, 4, 5), (std::vector<int>{16, 8, 4, 8, 16}));
}

TEST(Layout, SingleLayerCollapses) {
  for (auto l : {Layout::Square, Layout::Lhd, Layout::Rhd, Layout::Diamond, Layout::Triangle})
    EXPECT_EQ(expand_layout(l, 16, 1), (std::vector<int>{16}));
}

TEST(Layout, InvalidInputs) {
  EXPECT_THROW(expand_layout(Layout::Square, 4, 0), UsageError);
  EXPECT_THROW(parse_layout("hexagon"), UsageError);
}

TEST(Encode, LayoutSpaceEndpointsAndWidth) {
  const auto s = SearchSpace::named(SpaceName::Layout);
  EXPECT_EQ(encoded_width(s), 10u);
  RawConfig r;
  r.neurons = 4;
  EXPECT_EQ(encode(r, s)[2], 0.0f);
  r.neurons = 32;
  EXPECT_EQ(encode(r, s)[2], 1.0f);
}

TEST(Encode, OptimizationSpaceAdamOneHot) {
  const auto s = SearchSpace::named(SpaceName::Optimization);
  RawConfig r;
  r.layers = 3;
  r.layout = Layout::Lhd;
  r.optimizer = OptimizerKind::Adam;
  const auto e = encode(r, s);
  const auto schema = encoding_schema(s);
  const auto& seg = schema.back();
  ASSERT_EQ(seg.name, "optimizer");
  ASSERT_EQ(seg.width, 3u);
  EXPECT_EQ(std::vector<float>(e.begin() + static_cast<long>(seg.offset), e.end()), (std::vector<float>{1, 0, 0}));
}

TEST(Encode, ValueOutsideListIsUsageError) {
  RawConfig r;
  r.neurons = 5;
  EXPECT_THROW(encode(r, SearchSpace::named(SpaceName::Layout)), UsageError);
}

TEST(Normalize, HandExample) {
  MetaDataset m;
  m.responses["a"] = {{0, 1.0}, {1, 2.0}, {2, 4.0}};
  const auto n = normalize_responses(m);
  EXPECT_DOUBLE_EQ(n.responses.at("a").at(0), 0.0);
  EXPECT_NEAR(n.responses.at("a").at(1), 100.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(n.responses.at("a").at(2), 100.0);
  EXPECT_TRUE(n.normalized);
}

TEST(Normalize, FixedPointAndDegenerate) {
  MetaDataset m;
  m.responses["a"] = {{0, 0.3}, {1, 0.9}, {2, 0.5}};
  m.responses["b"] = {{0, 7.0}, {1, -1.0}, {2, 2.0}};
  const auto n1 = normalize_responses(m);
  const auto n2 = normalize_responses(n1);
  for (const auto& [id, row] : n1.responses)
    for (const auto& [c, v] : row) EXPECT_NEAR(n2.responses.at(id).at(c), v, 1e-12);
  m.responses["c"] = {{0, 1.0}, {1, 1.0}};
  EXPECT_THROW(normalize_responses(m), DegenerateSurfaceError);
}

TEST(Batch, CapsBind) {
  Dataset d = toy("t", 10, 1, 2, 1);
  for (auto& s : d.split) s = Split::Train;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto b = batch(d, rng);
    EXPECT_LE(b.data.rows, 10u);
    EXPECT_EQ(b.data.features, 1u);
    EXPECT_EQ(b.data.num_classes, 2);
  }
}

TEST(Batch, SeededDeterminism) {
  const Dataset d = toy("t", 300, 6, 4, 2);
  std::mt19937_64 a(17), b(17);
  const auto x = batch(d, a);
  const auto y = batch(d, b);
  EXPECT_EQ(x.rows, y.rows);
  EXPECT_EQ(x.features, y.features);
  EXPECT_EQ(x.classes, y.classes);
}

TEST(Batch, RowsFromTrainAndLabelsPreserved) {
  const Dataset d = toy("t", 200, 5, 3, 3);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 30; ++k) {
    const auto b = batch(d, rng);
    for (std::size_t r = 0; r < b.rows.size(); ++r) {
      EXPECT_EQ(d.split[b.rows[r]], Split::Train);
      EXPECT_EQ(b.classes[static_cast<std::size_t>(b.data.y[r])], d.y[b.rows[r]]);
      for (std::size_t f = 0; f < b.features.size(); ++f) EXPECT_EQ(b.data.at(r, f), d.at(b.rows[r], b.features[f]));
    }
  }
}

// Two balanced classes and 600 train rows: every power of two in 16..256 is
// admissible, so the row count is uniform over 5 values.
TEST(Batch, RowCountDistributionIsUniformOverPowersOfTwo) {
  Dataset d = toy("t", 600, 2, 2, 5);
  for (auto& s : d.split) s = Split::Train;
  std::map<std::size_t, int> counts;
  std::mt19937_64 rng(6);
  const int n = 10000;
  for (int i = 0; i < n; ++i) counts[batch(d, rng).data.rows]++;
  ASSERT_EQ(counts.size(), 5u);
  const double expected = n / 5.0;
  const double sigma = std::sqrt(n * 0.2 * 0.8);
  for (std::size_t r : {16u, 32u, 64u, 128u, 256u}) EXPECT_LE(std::abs(counts[r] - expected), 3 * sigma) << r;
}

TEST(Folds, PaperProportions) {
  for (const auto& f : split_folds(ids(120), 5, 1)) {
    EXPECT_EQ(f.train.size(), 80u);
    EXPECT_EQ(f.valid.size(), 16u);
    EXPECT_EQ(f.test.size(), 24u);
  }
  for (const auto& f : split_folds(ids(30), 5, 1)) {
    EXPECT_EQ(f.train.size(), 20u);
    EXPECT_EQ(f.valid.size(), 4u);
    EXPECT_EQ(f.test.size(), 6u);
  }
}

TEST(Folds, PartitionAndDisjointness) {
  const auto all = ids(60);
  const auto folds = split_folds(all, 5, 3);
  std::multiset<std::string> tests;
  for (const auto& f : folds) {
    tests.insert(f.test.begin(), f.test.end());
    std::set<std::string> seen;
    for (const auto* part : {&f.train, &f.valid, &f.test})
      for (const auto& id : *part) EXPECT_TRUE(seen.insert(id).second) << id;
    EXPECT_EQ(seen.size(), all.size());
  }
  EXPECT_EQ(tests, std::multiset<std::string>(all.begin(), all.end()));
  EXPECT_THROW(split_folds(ids(4), 5, 0), UsageError);
}

TEST(Folds, JsonRoundTrip) {
  const auto folds = split_folds(ids(30), 5, 9);
  const auto back = folds_from_json(folds_to_json(folds));
  ASSERT_EQ(back.size(), folds.size());
  for (std::size_t i = 0; i < folds.size(); ++i) {
    EXPECT_EQ(back[i].train, folds[i].train);
    EXPECT_EQ(back[i].valid, folds[i].valid);
    EXPECT_EQ(back[i].test, folds[i].test);
  }
}

TEST(DatasetCsv, RoundTripAndErrors) {
  const Dataset d = toy("rt", 20, 3, 2, 7);
  std::stringstream s;
  write_dataset_csv(s, d);
  const Dataset back = read_dataset_csv(s, "rt");
  EXPECT_EQ(back.rows, d.rows);
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.split, d.split);
  for (std::size_t i = 0; i < d.x.size(); ++i) EXPECT_FLOAT_EQ(back.x[i], d.x[i]);
  std::istringstream bad("a,b\n1,2\n");
  EXPECT_THROW(read_dataset_csv(bad, "bad"), IoError);
}

TEST(Standardize, TrainStatistics) {
  Dataset d = toy("z", 50, 2, 2, 8);
  for (auto& v : d.x) v = v * 3 + 10;
  standardize(d);
  for (std::size_t f = 0; f < 2; ++f) {
    double mean = 0;
    const auto rows = d.rows_in(Split::Train);
    for (auto r : rows) mean += d.at(r, f);
    EXPECT_NEAR(mean / static_cast<double>(rows.size()), 0.0, 1e-5);
  }
}

TEST(MetaDatasetIo, SaveLoadRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "dmfbs_meta_io";
  fs::remove_all(dir);
  MetaDataset m;
  m.space = SearchSpace::named(SpaceName::Layout);
  m.grid = enumerate_grid(m.space);
  m.datasets = {toy("a", 40, 2, 2, 1), toy("b", 40, 3, 3, 2)};
  for (const auto& d : m.datasets)
    for (const auto& c : m.grid) m.responses[d.id][c.id] = 0.1 * c.id + (d.id == "a" ? 1.0 : 2.0);
  save_meta_dataset(dir, m);
  const auto raw = load_meta_dataset(dir, false);
  EXPECT_EQ(raw.triple_count(), 512u);
  EXPECT_DOUBLE_EQ(raw.loss("b", 10), m.responses["b"][10]);
  const auto norm = load_meta_dataset(dir, true);
  EXPECT_TRUE(norm.normalized);
  EXPECT_DOUBLE_EQ(norm.loss("a", 0), 0.0);
  EXPECT_DOUBLE_EQ(norm.loss("a", 255), 100.0);
  EXPECT_EQ(norm.grid.size(), 256u);
  fs::remove_all(dir);
}

TEST(ResponsesCsv, SkipsTornLines) {
  std::istringstream in("dataset_id,config_id,loss\na,0,1.5\na,1\nb,2,3.0\n");
  const auto t = read_responses_csv(in);
  EXPECT_EQ(t.at("a").size(), 1u);
  EXPECT_DOUBLE_EQ(t.at("b").at(2), 3.0);
}
