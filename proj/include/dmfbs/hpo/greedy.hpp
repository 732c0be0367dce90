#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmfbs/errors.hpp"
#include "dmfbs/metadata/meta_dataset.hpp"

namespace dmfbs::hpo {

struct Trial {
  int config_id = 0;
  double loss = 0.0;
};

/// One sequential HPO run. `loss` values are normalized responses.
struct HPORun {
  std::string method;
  std::string dataset_id;
  int fold = 0;
  std::uint64_t seed = 0;
  int budget = 0;
  int init_budget = 1;
  std::vector<Trial> trials;
};

/// Invariant check used by tests and the CLI: distinct configs, length <= budget.
inline void validate_run(const HPORun& run) {
  if (static_cast<int>(run.trials.size()) > run.budget) throw UsageError("run has more trials than its budget");
  std::set<int> seen;
  for (const auto& t : run.trials) {
    if (!seen.insert(t.config_id).second) {
      throw UsageError("run evaluates config " + std::to_string(t.config_id) + " twice");
    }
  }
}

inline nlohmann::json run_to_json(const HPORun& run) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : run.trials) trials.push_back({{"config_id", t.config_id}, {"loss", t.loss}});
  return {{"method", run.method},   {"dataset_id", run.dataset_id}, {"fold", run.fold},
          {"seed", run.seed},       {"budget", run.budget},         {"init_budget", run.init_budget},
          {"trials", trials}};
}

inline HPORun run_from_json(const nlohmann::json& j) {
  HPORun run;
  run.method = j.at("method").get<std::string>();
  run.dataset_id = j.at("dataset_id").get<std::string>();
  run.fold = j.at("fold").get<int>();
  run.seed = j.at("seed").get<std::uint64_t>();
  run.budget = j.value("budget", static_cast<int>(j.at("trials").size()));
  run.init_budget = j.value("init_budget", 1);
  for (const auto& t : j.at("trials")) run.trials.push_back({t.at("config_id").get<int>(), t.at("loss").get<double>()});
  return run;
}

/// The `budget` candidate ids with the smallest scores, ascending by
/// (score, id). `scores[i]` belongs to `ids[i]`.
inline std::vector<int> greedy_select(const std::vector<int>& ids, const std::vector<double>& scores,
                                      std::size_t budget) {
  if (ids.size() != scores.size()) throw UsageError("greedy_select: one score per candidate expected");
  if (budget > ids.size()) {
    throw UsageError("greedy_select: budget " + std::to_string(budget) + " exceeds " + std::to_string(ids.size()) +
                     " candidates");
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(budget), order.end(), less);
  std::vector<int> out;
  for (std::size_t i = 0; i < budget; ++i) out.push_back(ids[order[i]]);
  return out;
}

inline std::vector<int> greedy_select(const std::vector<Config>& candidates, std::size_t budget,
                                      const std::function<double(const Config&)>& scorer) {
  std::vector<int> ids;
  std::vector<double> scores;
  for (const auto& c : candidates) {
    ids.push_back(c.id);
    scores.push_back(scorer(c));
  }
  return greedy_select(ids, scores, budget);
}

using RegretCurve = std::vector<double>;

/// curve[t] = min of the normalized losses of trials 0..t, read from `row`.
inline RegretCurve normalized_regret(const HPORun& run, const std::map<int, double>& row) {
  RegretCurve curve;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : run.trials) {
    auto it = row.find(t.config_id);
    if (it == row.end()) {
      throw UsageError("no response for config " + std::to_string(t.config_id) + " on '" + run.dataset_id + "'");
    }
    best = std::min(best, it->second);
    curve.push_back(best);
  }
  return curve;
}

/// Running minimum of the losses recorded in the run itself.
inline RegretCurve running_min(const HPORun& run) {
  RegretCurve curve;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : run.trials) {
    best = std::min(best, t.loss);
    curve.push_back(best);
  }
  return curve;
}

inline std::vector<int> grid_ids(const std::vector<Config>& grid) {
  std::vector<int> ids;
  for (const auto& c : grid) ids.push_back(c.id);
  return ids;
}

// ---------------------------------------------------------------------------
// Zero-shot baselines

/// Uniform sample of `budget` ids without replacement, in draw order.
inline std::vector<int> baseline_random(const std::vector<int>& ids, std::size_t budget, std::mt19937_64& rng) {
  if (budget > ids.size()) throw UsageError("random baseline: budget exceeds grid size");
  std::vector<int> pool = ids;
  std::vector<int> out;
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, pool.size() - 1)(rng);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

/// Ranks (1 = smallest loss) with ties sharing their average rank.
inline std::map<int, double> average_ranks(const std::map<int, double>& row) {
  std::vector<std::pair<double, int>> sorted;
  for (const auto& [id, loss] : row) sorted.emplace_back(loss, id);
  std::sort(sorted.begin(), sorted.end());
  std::map<int, double> ranks;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[sorted[k].second] = r;
    i = j;
  }
  return ranks;
}

/// Configs by ascending mean rank across `train_ids`; ties by id.
inline std::vector<int> baseline_avg_rank(const ResponseTable& table, const std::vector<std::string>& train_ids,
                                          const std::vector<int>& ids, std::size_t budget) {
  if (train_ids.empty()) throw UsageError("average-rank baseline needs meta-train datasets");
  if (budget > ids.size()) throw UsageError("average-rank baseline: budget exceeds grid size");
  std::map<int, double> total;
  for (int id : ids) total[id] = 0.0;
  for (const auto& d : train_ids) {
    auto it = table.find(d);
    if (it == table.end()) throw UsageError("average-rank baseline: no responses for '" + d + "'");
    for (int id : ids) {
      if (!it->second.count(id)) {
        throw UsageError("average-rank baseline: '" + d + "' lacks config " + std::to_string(id));
      }
    }
    std::map<int, double> row;
    for (int id : ids) row[id] = it->second.at(id);
    for (const auto& [id, r] : average_ranks(row)) total[id] += r;
  }
  std::vector<double> mean;
  for (int id : ids) mean.push_back(total[id] / static_cast<double>(train_ids.size()));
  return greedy_select(ids, mean, budget);
}

/// Walks meta-train datasets by ascending metafeature distance to the target and
/// emits each one's configs best-first, skipping repeats, until `budget` are listed.
inline std::vector<int> baseline_nn_mf(const std::vector<double>& target_mf,
                                       const std::map<std::string, std::vector<double>>& train_mf,
                                       const ResponseTable& table, const std::vector<int>& ids, std::size_t budget) {
  if (budget > ids.size()) throw UsageError("nearest-neighbour baseline: budget exceeds grid size");
  std::vector<std::pair<double, std::string>> neighbours;
  for (const auto& [id, mf] : train_mf) {
    if (mf.size() != target_mf.size()) throw UsageError("metafeature lengths differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < mf.size(); ++i) acc += (mf[i] - target_mf[i]) * (mf[i] - target_mf[i]);
    neighbours.emplace_back(std::sqrt(acc), id);
  }
  std::sort(neighbours.begin(), neighbours.end());
  const std::set<int> allowed(ids.begin(), ids.end());
  std::set<int> emitted;
  std::vector<int> out;
  for (const auto& [dist, id] : neighbours) {
    auto it = table.find(id);
    if (it == table.end()) continue;
    std::vector<int> cand;
    std::vector<double> losses;
    for (const auto& [cfg, loss] : it->second) {
      if (!allowed.count(cfg)) continue;
      cand.push_back(cfg);
      losses.push_back(loss);
    }
    for (int cfg : greedy_select(cand, losses, cand.size())) {
      if (out.size() == budget) return out;
      if (emitted.insert(cfg).second) out.push_back(cfg);
    }
    if (out.size() == budget) return out;
  }
  // Neighbours ran out: fill with the remaining ids in order.
  for (int id : ids) {
    if (out.size() == budget) break;
    if (emitted.insert(id).second) out.push_back(id);
  }
  return out;
}

/// Turns a fixed config sequence into a run by looking up the target's responses.
inline HPORun run_from_sequence(const std::string& method, const std::string& dataset_id,
                                const std::vector<int>& sequence, const std::map<int, double>& row) {
  HPORun run;
  run.method = method;
  run.dataset_id = dataset_id;
  run.budget = static_cast<int>(sequence.size());
  for (int id : sequence) {
    auto it = row.find(id);
    if (it == row.end()) throw UsageError("no response for config " + std::to_string(id) + " on '" + dataset_id + "'");
    run.trials.push_back({id, it->second});
  }
  return run;
}

}  // namespace dmfbs::hpo
