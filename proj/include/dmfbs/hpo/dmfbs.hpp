#pragma once

#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dmfbs/hpo/greedy.hpp"
#include "dmfbs/nd/optim.hpp"
#include "dmfbs/objective/update.hpp"
#include "dmfbs/surrogate/model.hpp"

namespace dmfbs::hpo {

struct HPOConfig {
  int init_budget = 1;
  int budget = 20;
  /// update_model steps before every sequential pick.
  int finetune_steps = 50;
  double lr = 0.01;
  double beta1 = 0.9;
  objective::TrainConfig train;
};

/// Scores `candidates` given the trials observed so far (lower is better).
using Scorer = std::function<std::vector<double>(const std::vector<Trial>& observed, const std::vector<int>& candidates)>;

/// Greedy sequential loop: `init_budget` zero-shot picks from one scorer call,
/// then one pick per scorer call. Losses come from `truth`.
inline HPORun sequential_greedy(const std::string& method, const std::string& dataset_id, const std::vector<int>& ids,
                                const std::map<int, double>& truth, int init_budget, int budget, const Scorer& scorer) {
  if (init_budget < 1) throw UsageError("initial budget must be at least 1");
  if (budget < 1 || static_cast<std::size_t>(budget) > ids.size()) {
    throw UsageError("budget " + std::to_string(budget) + " must lie in [1, " + std::to_string(ids.size()) + "]");
  }
  HPORun run;
  run.method = method;
  run.dataset_id = dataset_id;
  run.budget = budget;
  run.init_budget = init_budget;
  std::set<int> used;
  auto observe = [&](int id) {
    auto it = truth.find(id);
    if (it == truth.end()) throw UsageError("no response for config " + std::to_string(id) + " on '" + dataset_id + "'");
    run.trials.push_back({id, it->second});
    used.insert(id);
  };
  auto remaining = [&] {
    std::vector<int> out;
    for (int id : ids)
      if (!used.count(id)) out.push_back(id);
    return out;
  };
  {
    const auto first = std::min(init_budget, budget);
    auto cand = remaining();
    for (int id : greedy_select(cand, scorer(run.trials, cand), static_cast<std::size_t>(first))) observe(id);
  }
  while (static_cast<int>(run.trials.size()) < budget) {
    auto cand = remaining();
    observe(greedy_select(cand, scorer(run.trials, cand), 1).front());
  }
  return run;
}

/// Fine-tuning meta-dataset: meta-train responses plus the target's observations.
inline MetaDataset finetune_meta(const MetaDataset& meta, const std::vector<std::string>& train_ids,
                                 const std::string& target_id) {
  MetaDataset e;
  e.space = meta.space;
  e.grid = meta.grid;
  e.normalized = meta.normalized;
  e.responses = restrict_responses(meta.responses, train_ids);
  e.responses.erase(target_id);
  for (const auto& id : train_ids) e.datasets.push_back(meta.dataset(id));
  e.datasets.push_back(meta.dataset(target_id));
  return e;
}

/// run-dmfbs: zero-shot picks from theta, then fine-tune and pick one config per trial.
/// `meta` must hold normalized responses for the target (used only as the oracle
/// answering evaluations) and for every id in `train_ids`.
template <class T>
HPORun run_dmfbs(const MetaDataset& meta, const std::string& target_id, const std::vector<std::string>& train_ids,
                 const nd::ParamSet<T>& theta, const surrogate::ModelSpec& spec, const HPOConfig& cfg,
                 std::mt19937_64& rng, const std::string& method = "dmfbs") {
  const auto truth_it = meta.responses.find(target_id);
  if (truth_it == meta.responses.end()) throw UsageError("no responses for target '" + target_id + "'");
  MetaDataset e = finetune_meta(meta, train_ids, target_id);
  const Dataset& target = meta.dataset(target_id);
  nd::ParamSet<T> params = theta;
  auto opt = nd::OptimizerState::adam(cfg.lr, cfg.beta1);

  std::map<int, std::size_t> position;
  for (std::size_t i = 0; i < meta.grid.size(); ++i) position[meta.grid[i].id] = i;

  Scorer scorer = [&](const std::vector<Trial>& observed, const std::vector<int>& candidates) {
    auto& row = e.responses[target_id];
    for (const auto& t : observed) row[t.config_id] = t.loss;
    if (!observed.empty()) {
      for (int s = 0; s < cfg.finetune_steps; ++s) objective::update_model(e, params, opt, target_id, spec, cfg.train, rng);
    }
    const auto all = surrogate::predict_grid(target, meta.grid, params, spec);
    std::vector<double> scores;
    for (int id : candidates) scores.push_back(all[position.at(id)]);
    return scores;
  };
  return sequential_greedy(method, target_id, grid_ids(meta.grid), truth_it->second, cfg.init_budget, cfg.budget,
                           scorer);
}

/// Zero-shot greedy ranking of the whole grid under theta (no fine-tuning).
template <class T>
std::vector<int> zero_shot_ranking(const MetaDataset& meta, const std::string& target_id, const nd::ParamSet<T>& theta,
                                   const surrogate::ModelSpec& spec, std::size_t budget) {
  const auto scores = surrogate::predict_grid(meta.dataset(target_id), meta.grid, theta, spec);
  return greedy_select(grid_ids(meta.grid), scores, budget);
}

/// Mean regret at `budget` of zero-shot greedy picks over `ids`.
template <class T>
double zero_shot_regret(const MetaDataset& meta, const std::vector<std::string>& ids, const nd::ParamSet<T>& theta,
                        const surrogate::ModelSpec& spec, std::size_t budget) {
  if (ids.empty()) throw UsageError("zero-shot regret needs at least one dataset");
  double total = 0.0;
  for (const auto& id : ids) {
    const auto picks = zero_shot_ranking(meta, id, theta, spec, budget);
    const auto run = run_from_sequence("zero-shot", id, picks, meta.responses.at(id));
    total += running_min(run).back();
  }
  return total / static_cast<double>(ids.size());
}

}  // namespace dmfbs::hpo
