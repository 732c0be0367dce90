#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "dmfbs/eval/experiment.hpp"
#include "dmfbs/hpo/dmfbs.hpp"
#include "dmfbs/hpo/greedy.hpp"
#include "fixtures.hpp"

using namespace dmfbs;
using namespace dmfbs::hpo;

TEST(Greedy, PicksLowestScores) {
  EXPECT_EQ(greedy_select({1, 2, 3}, {0.3, 0.1, 0.2}, 2), (std::vector<int>{2, 3}));
  EXPECT_EQ(greedy_select({1, 2, 3}, {0.3, 0.1, 0.2}, 0), (std::vector<int>{}));
  // Ties go to the smaller id.
  EXPECT_EQ(greedy_select({9, 4, 6}, {1.0, 1.0, 0.5}, 3), (std::vector<int>{6, 4, 9}));
  EXPECT_THROW(greedy_select({1, 2}, {0.1, 0.2}, 3), UsageError);
  EXPECT_THROW(greedy_select({1, 2}, {0.1}, 1), UsageError);
}

TEST(Greedy, FullBudgetIsSortedOrder) {
  std::mt19937_64 rng(1);
  std::vector<int> ids(50);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<double> scores(50);
  for (auto& s : scores) s = std::uniform_real_distribution<double>(0, 1)(rng);
  const auto picks = greedy_select(ids, scores, 50);
  ASSERT_EQ(picks.size(), 50u);
  EXPECT_EQ(std::set<int>(picks.begin(), picks.end()).size(), 50u);
  for (std::size_t i = 1; i < picks.size(); ++i) {
    EXPECT_LE(scores[static_cast<std::size_t>(picks[i - 1])], scores[static_cast<std::size_t>(picks[i])]);
  }
}

TEST(Greedy, ConfigOverloadUsesScorer) {
  const auto grid = enumerate_grid(SearchSpace::named(SpaceName::Layout));
  const auto picks = greedy_select(grid, 3, [](const Config& c) { return -static_cast<double>(c.id); });
  EXPECT_EQ(picks, (std::vector<int>{255, 254, 253}));
}

TEST(Sequential, OracleScorerHasZeroRegretAtFirstTrial) {
  std::map<int, double> truth;
  std::vector<int> ids;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 30; ++i) {
    ids.push_back(i);
    truth[i] = std::uniform_real_distribution<double>(0, 100)(rng);
  }
  const double best = std::min_element(truth.begin(), truth.end(), [](auto& a, auto& b) { return a.second < b.second; })
                          ->second;
  Scorer oracle = [&](const std::vector<Trial>&, const std::vector<int>& cand) {
    std::vector<double> s;
    for (int c : cand) s.push_back(truth.at(c));
    return s;
  };
  const auto run = sequential_greedy("oracle", "d", ids, truth, 1, 30, oracle);
  EXPECT_EQ(running_min(run).front(), best);
  std::set<int> seen;
  for (const auto& t : run.trials) EXPECT_TRUE(seen.insert(t.config_id).second);
  EXPECT_EQ(seen.size(), 30u);
  EXPECT_NO_THROW(validate_run(run));
  EXPECT_THROW(sequential_greedy("oracle", "d", ids, truth, 1, 31, oracle), UsageError);
  EXPECT_THROW(sequential_greedy("oracle", "d", ids, truth, 0, 5, oracle), UsageError);
}

TEST(Sequential, ScorerSeesObservationsAfterInitialBatch) {
  std::map<int, double> truth{{0, 5}, {1, 4}, {2, 3}, {3, 2}, {4, 1}};
  std::vector<std::size_t> calls;
  Scorer s = [&](const std::vector<Trial>& obs, const std::vector<int>& cand) {
    calls.push_back(obs.size());
    return std::vector<double>(cand.size(), 0.0);
  };
  const auto run = sequential_greedy("m", "d", {0, 1, 2, 3, 4}, truth, 3, 5, s);
  EXPECT_EQ(calls, (std::vector<std::size_t>{0, 3, 4}));
  EXPECT_EQ(run.trials.size(), 5u);
}

TEST(RandomBaseline, PermutationPrefixAndDeterminism) {
  std::vector<int> ids(20);
  std::iota(ids.begin(), ids.end(), 100);
  std::mt19937_64 a(3), b(3);
  const auto x = baseline_random(ids, 20, a);
  EXPECT_EQ(x, baseline_random(ids, 20, b));
  EXPECT_TRUE(std::is_permutation(x.begin(), x.end(), ids.begin()));
  EXPECT_THROW(baseline_random(ids, 21, a), UsageError);
}

TEST(RandomBaseline, FirstPickIsUniform) {
  std::vector<int> ids(10);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<int> counts(10, 0);
  for (std::uint64_t s = 0; s < 10000; ++s) {
    std::mt19937_64 rng(s);
    ++counts[static_cast<std::size_t>(baseline_random(ids, 1, rng).front())];
  }
  // 1000 expected per id, sd 30.
  for (int c : counts) {
    EXPECT_GT(c, 850);
    EXPECT_LT(c, 1150);
  }
}

TEST(AvgRank, HandOracle) {
  ResponseTable t;
  t["dA"] = {{0, 5}, {1, 3}, {2, 3}, {3, 1}, {4, 9}};
  t["dB"] = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}};
  t["dC"] = {{0, 2}, {1, 2}, {2, 2}, {3, 8}, {4, 0}};
  const auto ranks = average_ranks(t["dA"]);
  EXPECT_DOUBLE_EQ(ranks.at(1), 2.5);
  EXPECT_DOUBLE_EQ(ranks.at(2), 2.5);
  EXPECT_EQ(baseline_avg_rank(t, {"dA", "dB", "dC"}, {0, 1, 2, 3, 4}, 5), (std::vector<int>{1, 0, 2, 3, 4}));
  EXPECT_THROW(baseline_avg_rank(t, {"dA", "dX"}, {0, 1}, 2), UsageError);
  EXPECT_THROW(baseline_avg_rank(t, {}, {0, 1}, 2), UsageError);
}

TEST(NnMf, HandOracle) {
  ResponseTable t;
  t["dA"] = {{3, 1}, {1, 3}};
  t["dB"] = {{6, 1}, {2, 2}};
  t["dC"] = {{4, 0}, {1, 2}, {5, 7}};
  std::map<std::string, std::vector<double>> mf{{"dA", {1, 0}}, {"dB", {0, 3}}, {"dC", {2, 2}}};
  const std::vector<int> ids{0, 1, 2, 3, 4, 5, 6};
  EXPECT_EQ(baseline_nn_mf({0, 0}, mf, t, ids, 6), (std::vector<int>{3, 1, 4, 5, 6, 2}));
  EXPECT_EQ(baseline_nn_mf({0, 0}, mf, t, ids, 7), (std::vector<int>{3, 1, 4, 5, 6, 2, 0}));
  EXPECT_THROW(baseline_nn_mf({0}, mf, t, ids, 2), UsageError);
}

TEST(Regret, RunningMinimum) {
  const auto run = run_from_sequence("m", "d", {0, 1, 2}, {{0, 50}, {1, 30}, {2, 40}});
  EXPECT_EQ(running_min(run), (RegretCurve{50, 30, 30}));
  EXPECT_EQ(normalized_regret(run, {{0, 50}, {1, 30}, {2, 40}}), (RegretCurve{50, 30, 30}));
  EXPECT_THROW(run_from_sequence("m", "d", {9}, {{0, 1}}), UsageError);
}

TEST(Regret, MatchesBruteForceOnRandomRuns) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 1000; ++k) {
    std::map<int, double> row;
    for (int i = 0; i < 15; ++i) row[i] = std::uniform_real_distribution<double>(0, 100)(rng);
    std::vector<int> ids(15);
    std::iota(ids.begin(), ids.end(), 0);
    const auto seq = baseline_random(ids, 10, rng);
    const auto curve = running_min(run_from_sequence("m", "d", seq, row));
    for (std::size_t t = 0; t < seq.size(); ++t) {
      double best = 1e300;
      for (std::size_t j = 0; j <= t; ++j) best = std::min(best, row.at(seq[j]));
      ASSERT_EQ(curve[t], best);
    }
  }
}

TEST(RunJson, RoundTrip) {
  HPORun run = run_from_sequence("dmfbs", "syn01", {4, 2}, {{2, 1.5}, {4, 0.25}});
  run.fold = 3;
  run.seed = 9;
  run.init_budget = 1;
  const auto back = run_from_json(run_to_json(run));
  EXPECT_EQ(back.method, "dmfbs");
  EXPECT_EQ(back.fold, 3);
  EXPECT_EQ(back.seed, 9u);
  ASSERT_EQ(back.trials.size(), 2u);
  EXPECT_EQ(back.trials[1].config_id, 2);
  EXPECT_EQ(back.trials[1].loss, 1.5);
  run.trials.push_back(run.trials.front());
  EXPECT_THROW(validate_run(run), UsageError);
}

TEST(RunDmfbs, ProducesValidDeterministicRuns) {
  const MetaDataset meta = fixtures::small_meta(4, 9);
  const auto spec = fixtures::tiny_spec(meta);
  const auto theta = surrogate::init_model<float>(spec, 1);
  const auto ids = meta.dataset_ids();
  HPOConfig cfg;
  cfg.budget = 6;
  cfg.init_budget = 2;
  cfg.finetune_steps = 2;
  auto go = [&] {
    std::mt19937_64 rng(5);
    return run_dmfbs(meta, ids[3], {ids[0], ids[1], ids[2]}, theta, spec, cfg, rng);
  };
  const auto a = go(), b = go();
  ASSERT_EQ(a.trials.size(), 6u);
  EXPECT_NO_THROW(validate_run(a));
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].config_id, b.trials[i].config_id);
    EXPECT_EQ(a.trials[i].loss, meta.loss(ids[3], a.trials[i].config_id));
  }
  // Zero-shot picks are the model's greedy ranking.
  const auto zs = zero_shot_ranking(meta, ids[3], theta, spec, 2);
  EXPECT_EQ(a.trials[0].config_id, zs[0]);
  EXPECT_EQ(a.trials[1].config_id, zs[1]);
}

TEST(RunMethod, BaselinesThroughExperimentDriver) {
  const MetaDataset meta = fixtures::small_meta(5, 10);
  const auto ids = meta.dataset_ids();
  const std::vector<std::string> train{ids[0], ids[1], ids[2], ids[3]};
  for (const std::string m : {"random", "avg-rank", "nn-mf"}) {
    eval::RunOptions opt;
    opt.method = m;
    opt.budget = 20;
    opt.fold = 2;
    const auto run = eval::run_method(meta, ids[4], train, opt);
    EXPECT_EQ(run.trials.size(), 20u) << m;
    EXPECT_EQ(run.fold, 2);
    EXPECT_NO_THROW(validate_run(run));
  }
  eval::RunOptions bad;
  bad.method = "dmfbs";
  EXPECT_THROW(eval::run_method(meta, ids[4], train, bad), UsageError);
  bad.method = "nope";
  EXPECT_THROW(eval::run_method(meta, ids[4], train, bad), UsageError);
}
