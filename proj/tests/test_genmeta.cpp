#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "dmfbs/genmeta/build.hpp"
#include "dmfbs/genmeta/synth.hpp"
#include "dmfbs/genmeta/target_net.hpp"
#include "fixtures.hpp"

using namespace dmfbs;
using namespace dmfbs::genmeta;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dmfbs_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

int argmin_of(const std::map<int, double>& row) {
  return std::min_element(row.begin(), row.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
}

}  // namespace

TEST(TargetNet, LearnsSeparableToy) {
  const Dataset d = fixtures::gaussian("sep", 200, 2, 2, 1);
  RawConfig raw;
  raw.neurons = 8;
  raw.layers = 2;
  TargetNetSpec spec;
  spec.epochs = 30;
  spec.lr = 0.01;
  const auto r = train_target_net(d, raw, spec, 3);
  EXPECT_FALSE(r.diverged);
  EXPECT_LT(r.val_loss, std::log(2.0));
  EXPECT_GT(r.val_accuracy, 0.6);
}

TEST(TargetNet, ZeroEpochsGiveUniformPrediction) {
  const Dataset d = fixtures::gaussian("u", 50, 3, 4, 2);
  TargetNetSpec spec;
  spec.epochs = 0;
  EXPECT_NEAR(train_target_net(d, RawConfig{}, spec, 1).val_loss, std::log(4.0), 1e-6);
}

TEST(TargetNet, DeterministicPerSeed) {
  const Dataset d = fixtures::gaussian("det", 60, 2, 3, 4);
  RawConfig raw;
  raw.dropout = 0.2;
  raw.normalization = true;
  raw.optimizer = OptimizerKind::RMSProp;
  TargetNetSpec spec;
  spec.epochs = 3;
  EXPECT_EQ(train_target_net(d, raw, spec, 5).val_loss, train_target_net(d, raw, spec, 5).val_loss);
}

TEST(TargetNet, LayerShapesFollowLayout) {
  RawConfig raw;
  raw.neurons = 8;
  raw.layers = 3;
  raw.layout = Layout::Diamond;
  const auto layers = target_net_layers(raw, 5, 3);
  ASSERT_EQ(layers.size(), 4u);
  const auto& first = std::get<nd::DenseSpec>(layers.front());
  const auto& last = std::get<nd::DenseSpec>(layers.back());
  EXPECT_EQ(first.in, 5u);
  EXPECT_EQ(first.out, static_cast<std::size_t>(raw.widths().front()));
  EXPECT_EQ(raw.widths(), expand_layout(Layout::Diamond, 8, 3));
  EXPECT_EQ(last.out, 3u);
  EXPECT_EQ(last.act, nd::Activation::None);
}

TEST(Build, FullGridIsResumable) {
  const auto dir = fresh_dir("build");
  const std::vector<Dataset> data{fixtures::gaussian("a", 30, 2, 2, 1), fixtures::gaussian("b", 30, 3, 3, 2)};
  const auto space = SearchSpace::named(SpaceName::Layout);
  const auto grid = enumerate_grid(space);
  TargetNetSpec spec;
  spec.epochs = 1;

  const auto first = build_meta_dataset(data, space, grid, spec, dir, 7);
  EXPECT_EQ(first.jobs_run, 512u);
  EXPECT_EQ(first.meta.triple_count(), 512u);
  const auto loaded = load_meta_dataset(dir, false);
  EXPECT_EQ(loaded.triple_count(), 512u);
  EXPECT_EQ(loaded.responses, first.meta.responses);

  const auto again = build_meta_dataset(data, space, grid, spec, dir, 7);
  EXPECT_EQ(again.jobs_run, 0u);
  EXPECT_EQ(again.meta.responses, first.meta.responses);

  // Drop one finished job and tear the final line: only that job reruns.
  auto lines = read_lines(dir / "responses.csv");
  ASSERT_GT(lines.size(), 10u);
  lines.erase(lines.begin() + 5);
  {
    std::ofstream out(dir / "responses.csv");
    for (const auto& l : lines) out << l << '\n';
    out << "b,3,0.12";
  }
  const auto resumed = build_meta_dataset(data, space, grid, spec, dir, 7);
  EXPECT_EQ(resumed.jobs_run, 1u);
  EXPECT_EQ(resumed.meta.responses, first.meta.responses);
  fs::remove_all(dir);
}

TEST(Synth, NoiselessResponsesMatchOracle) {
  SynthSpec s;
  s.count = 20;
  s.sigma = 0.0;
  s.seed = 4;
  const auto grid = enumerate_grid(SearchSpace::named(SpaceName::Layout));
  const auto r = synth(s, SearchSpace::named(SpaceName::Layout));
  for (const auto& d : r.meta.datasets) {
    const auto& row = r.meta.responses.at(d.id);
    EXPECT_EQ(argmin_of(row), r.oracle.argmin(grid, d));
    EXPECT_DOUBLE_EQ(row.at(17), r.oracle.noiseless(grid[17].encoded, d));
  }
}

TEST(Synth, IdenticalStatsGiveIdenticalRows) {
  SynthSpec s;
  s.count = 2;
  s.sigma = 0.0;
  const auto space = SearchSpace::named(SpaceName::Layout);
  const auto r = synth(s, space);
  Dataset twin = r.meta.datasets[0];
  twin.id = "twin";
  std::reverse(twin.x.begin(), twin.x.end());
  for (const auto& c : r.meta.grid) {
    EXPECT_EQ(r.oracle.noiseless(c.encoded, twin), r.meta.responses.at(r.meta.datasets[0].id).at(c.id));
  }
}

TEST(Synth, DeterministicPerSeed) {
  SynthSpec s;
  s.count = 5;
  s.seed = 9;
  const auto space = SearchSpace::named(SpaceName::Layout);
  const auto a = synth(s, space), b = synth(s, space);
  EXPECT_EQ(a.meta.responses, b.meta.responses);
  EXPECT_EQ(a.oracle.projection, b.oracle.projection);
  s.sigma = -1;
  EXPECT_THROW(synth(s, space), UsageError);
}

TEST(Synth, SeedZeroAgreementAndBalance) {
  SynthSpec s;
  s.count = 500;
  s.seed = 0;
  const auto space = SearchSpace::named(SpaceName::Layout);
  const auto r = synth(s, space);
  int agree = 0;
  std::set<int> argmins;
  for (std::size_t i = 0; i < r.meta.datasets.size(); ++i) {
    const auto& d = r.meta.datasets[i];
    const int noisy = argmin_of(r.meta.responses.at(d.id));
    if (i < 100 && noisy == r.oracle.argmin(r.meta.grid, d)) ++agree;
    argmins.insert(r.oracle.argmin(r.meta.grid, d));
  }
  EXPECT_GE(agree, 95);
  EXPECT_GE(argmins.size() * 4, r.meta.grid.size());
}
