#pragma once

#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "dmfbs/errors.hpp"
#include "dmfbs/hpo/dmfbs.hpp"
#include "dmfbs/nd/optim.hpp"
#include "dmfbs/objective/update.hpp"

namespace dmfbs::metalearn {

using nd::ParamSet;

struct MetaConfig {
  int inner_steps = 5;
  int meta_batch = 16;
  int outer_iters = 500;
  double outer_lr = 0.01;
  double inner_lr = 0.01;
  double inner_beta1 = 0.0;
  int eval_every = 10;
  int patience = 10;
  int eval_budget = 20;
};

/// theta + eta * mean_i(theta_i - theta), accumulated in double.
template <class T>
ParamSet<T> reptile_outer_step(const ParamSet<T>& theta, const std::vector<ParamSet<T>>& adapted, double eta) {
  if (adapted.empty()) throw UsageError("outer step needs at least one adapted parameter set");
  ParamSet<T> out = theta;
  const double n = static_cast<double>(adapted.size());
  for (auto& [name, p] : out) {
    if (nd::is_buffer(name)) continue;
    std::vector<double> acc(p.size(), 0.0);
    for (const auto& a : adapted) {
      auto it = a.find(name);
      if (it == a.end() || it->second.shape != p.shape) throw UsageError("adapted set lacks '" + name + "'");
      for (std::size_t i = 0; i < p.size(); ++i) acc[i] += static_cast<double>(it->second[i]) - static_cast<double>(p[i]);
    }
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<T>(static_cast<double>(p[i]) + eta * acc[i] / n);
  }
  return out;
}

/// Adapts a copy of theta to one task.
template <class T>
using InnerLoop = std::function<ParamSet<T>(const ParamSet<T>& theta, const std::string& task, std::mt19937_64& rng)>;

/// Scores a snapshot on the meta-valid datasets (lower is better).
template <class T>
using Evaluator = std::function<double(const ParamSet<T>& theta)>;

struct ProgressPoint {
  int outer_iter = 0;
  double regret = 0.0;
};

template <class T>
struct MetaLearnResult {
  ParamSet<T> best;
  double best_regret = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  int iterations = 0;
  std::vector<ProgressPoint> progress;
};

/// `inner_steps` update_model calls with a fresh Adam state (beta1 from cfg).
template <class T>
InnerLoop<T> update_model_inner_loop(const MetaDataset& train_meta, const surrogate::ModelSpec& spec,
                                     const objective::TrainConfig& tcfg, const MetaConfig& mcfg) {
  return [&train_meta, spec, tcfg, mcfg](const ParamSet<T>& theta, const std::string& task, std::mt19937_64& rng) {
    ParamSet<T> p = theta;
    auto opt = nd::OptimizerState::adam(mcfg.inner_lr, mcfg.inner_beta1);
    for (int j = 0; j < mcfg.inner_steps; ++j) objective::update_model(train_meta, p, opt, task, spec, tcfg, rng);
    return p;
  };
}

/// First-order meta-learning of the initialization. Samples `meta_batch` task
/// ids uniformly (with replacement) per outer iteration, adapts each with
/// `inner`, moves theta toward the mean adapted point, and keeps the snapshot
/// with the lowest `evaluate` score. Evaluation happens before the first
/// iteration and every `eval_every` iterations; `patience` evaluations without
/// improvement stop the loop.
template <class T>
MetaLearnResult<T> meta_learn(const ParamSet<T>& theta0, const std::vector<std::string>& train_ids,
                              const MetaConfig& cfg, std::mt19937_64& rng, const InnerLoop<T>& inner,
                              const Evaluator<T>& evaluate) {
  if (train_ids.empty()) throw UsageError("meta-learning needs at least one meta-train dataset");
  if (cfg.meta_batch < 1) throw UsageError("meta-batch size must be at least 1");
  MetaLearnResult<T> result;
  ParamSet<T> theta = theta0;
  int stale = 0;
  auto checkpoint = [&](int iter) {
    if (!evaluate) {
      result.best = theta;
      result.best_iter = iter;
      return;
    }
    const double r = evaluate(theta);
    result.progress.push_back({iter, r});
    if (r < result.best_regret) {
      result.best_regret = r;
      result.best = theta;
      result.best_iter = iter;
      stale = 0;
    } else {
      ++stale;
    }
  };
  checkpoint(0);
  std::uniform_int_distribution<std::size_t> pick(0, train_ids.size() - 1);
  for (int it = 1; it <= cfg.outer_iters; ++it) {
    std::vector<ParamSet<T>> adapted;
    for (int i = 0; i < cfg.meta_batch; ++i) {
      const std::string& task = train_ids[pick(rng)];
      adapted.push_back(inner(theta, task, rng));
    }
    theta = reptile_outer_step(theta, adapted, cfg.outer_lr);
    result.iterations = it;
    const bool last = it == cfg.outer_iters;
    if ((cfg.eval_every > 0 && it % cfg.eval_every == 0) || last) {
      checkpoint(it);
      if (evaluate && cfg.patience > 0 && stale >= cfg.patience) break;
    }
  }
  return result;
}

/// meta-learn-dmfbs-initialization over `meta` (normalized responses): tasks
/// come from `train_ids`, early stopping uses zero-shot greedy regret at
/// cfg.eval_budget on `valid_ids`.
template <class T>
MetaLearnResult<T> meta_learn_init(const MetaDataset& meta, const ParamSet<T>& theta0,
                                   const std::vector<std::string>& train_ids, const std::vector<std::string>& valid_ids,
                                   const surrogate::ModelSpec& spec, const objective::TrainConfig& tcfg,
                                   const MetaConfig& mcfg, std::mt19937_64& rng) {
  for (const auto& v : valid_ids)
    for (const auto& t : train_ids)
      if (v == t) throw UsageError("dataset '" + v + "' is in both meta-train and meta-valid");
  MetaDataset train_meta = meta;
  train_meta.responses = restrict_responses(meta.responses, train_ids);
  auto inner = update_model_inner_loop<T>(train_meta, spec, tcfg, mcfg);
  Evaluator<T> evaluate;
  if (!valid_ids.empty()) {
    const std::size_t budget = std::min<std::size_t>(static_cast<std::size_t>(mcfg.eval_budget), meta.grid.size());
    evaluate = [&meta, &valid_ids, &spec, budget](const ParamSet<T>& theta) {
      return hpo::zero_shot_regret(meta, valid_ids, theta, spec, budget);
    };
  }
  return meta_learn(theta0, train_ids, mcfg, rng, inner, evaluate);
}

inline void write_progress_csv(std::ostream& out, const std::vector<ProgressPoint>& progress) {
  out << "outer_iter,meta_valid_regret_at_B\n";
  out.precision(10);
  for (const auto& p : progress) out << p.outer_iter << ',' << p.regret << '\n';
}

}  // namespace dmfbs::metalearn
