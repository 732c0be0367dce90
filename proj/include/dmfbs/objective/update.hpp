#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "dmfbs/errors.hpp"
#include "dmfbs/metadata/batch.hpp"
#include "dmfbs/metadata/meta_dataset.hpp"
#include "dmfbs/nd/optim.hpp"
#include "dmfbs/objective/losses.hpp"
#include "dmfbs/surrogate/model.hpp"

namespace dmfbs::objective {

using surrogate::ModelSpec;

/// Everything update_model samples for one step, so the loss can be rebuilt
/// deterministically (e.g. for gradient checks).
struct UpdatePlan {
  Dataset target;                       // train view of D_n
  std::vector<int> configs;             // sampled config ids (with repetition when few)
  std::vector<double> losses;           // l(lambda_i, D_n)
  bool has_other = false;
  Dataset other;                        // train view of D_m
  std::vector<double> other_losses;     // l(lambda_i, D_m), same configs
  std::vector<Dataset> dbi_batches;     // D'_n, D''_n, D'_m
};

/// Draws the minibatch for one update step on `target_id`.
/// D_m is one other dataset with responses for every sampled config.
inline UpdatePlan sample_plan(const MetaDataset& meta, const std::string& target_id, const TrainConfig& cfg,
                              std::mt19937_64& rng, bool need_other = true, bool need_dbi = true) {
  auto row_it = meta.responses.find(target_id);
  if (row_it == meta.responses.end() || row_it->second.empty()) {
    throw UsageError("update_model: no responses for dataset '" + target_id + "'");
  }
  if (cfg.batch_size == 0) throw UsageError("update_model: batch size must be positive");
  const auto& row = row_it->second;
  std::vector<int> pool;
  for (const auto& [cfg_id, loss] : row) pool.push_back(cfg_id);

  UpdatePlan plan;
  if (pool.size() < cfg.batch_size) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) plan.configs.push_back(pool[pick(rng)]);
  } else {
    std::sample(pool.begin(), pool.end(), std::back_inserter(plan.configs), cfg.batch_size, rng);
    std::shuffle(plan.configs.begin(), plan.configs.end(), rng);
  }
  for (int c : plan.configs) plan.losses.push_back(row.at(c));
  const Dataset& dn = meta.dataset(target_id);
  plan.target = train_view(dn);

  std::vector<std::string> others;
  if (need_other || need_dbi) {
    for (const auto& [id, r] : meta.responses) {
      if (id == target_id) continue;
      const bool covers =
          std::all_of(plan.configs.begin(), plan.configs.end(), [&](int c) { return r.count(c) > 0; });
      if (covers) others.push_back(id);
    }
  }
  if (!others.empty()) {
    const std::string& m = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
    const auto& rm = meta.responses.at(m);
    plan.has_other = true;
    plan.other = train_view(meta.dataset(m));
    for (int c : plan.configs) plan.other_losses.push_back(rm.at(c));
  }
  if (need_dbi) {
    plan.dbi_batches.push_back(batch(dn, rng).data);
    plan.dbi_batches.push_back(batch(dn, rng).data);
    if (plan.has_other) plan.dbi_batches.push_back(batch(meta.dataset(plan.other.id), rng).data);
  }
  return plan;
}

struct LossTerms {
  double sur = 0.0;
  double mr = 0.0;
  double dbi = 0.0;
  double total = 0.0;
};

/// Records the combined objective for `plan` on `tape`.
template <class T>
Var<T> plan_loss(Tape<T>& tape, const UpdatePlan& plan, const std::vector<Config>& grid, const ModelSpec& spec,
                 const TrainConfig& cfg, LossTerms* terms = nullptr) {
  std::vector<const std::vector<float>*> enc;
  for (int c : plan.configs) {
    const auto pos = static_cast<std::size_t>(c);
    const Config* conf = pos < grid.size() && grid[pos].id == c ? &grid[pos] : nullptr;
    if (!conf) {
      auto it = std::find_if(grid.begin(), grid.end(), [c](const Config& g) { return g.id == c; });
      if (it == grid.end()) throw UsageError("config id " + std::to_string(c) + " is not in the grid");
      conf = &*it;
    }
    enc.push_back(&conf->encoded);
  }
  Var<T> configs = tape.constant(surrogate::config_matrix<T>(enc, spec.config_width));
  Var<T> phi_n = surrogate::phi(tape, plan.target, spec);
  Var<T> pred_n = surrogate::predict(phi_n, configs, spec);

  Tensor<T> target({plan.losses.size(), 1});
  for (std::size_t i = 0; i < plan.losses.size(); ++i) target[i] = static_cast<T>(plan.losses[i] * cfg.target_scale);
  Var<T> sur = loss_sur(pred_n, target);

  Var<T> mr = zero_scalar(tape);
  if (cfg.alpha_mr != 0.0 && plan.has_other) {
    Var<T> phi_m = surrogate::phi(tape, plan.other, spec);
    Var<T> pred_m = surrogate::predict(phi_m, configs, spec);
    std::vector<MRItem<T>> items;
    for (std::size_t i = 0; i < plan.configs.size(); ++i) items.push_back({nd::element(pred_n, i), plan.configs[i], 0});
    for (std::size_t i = 0; i < plan.configs.size(); ++i) items.push_back({nd::element(pred_m, i), plan.configs[i], 1});
    mr = loss_mr(tape, items, {phi_n, phi_m});
  }

  Var<T> dbi = zero_scalar(tape);
  if (cfg.alpha_dbi != 0.0 && spec.learned_mf() && plan.dbi_batches.size() >= 2) {
    Var<T> a = surrogate::phi(tape, plan.dbi_batches[0], spec);
    Var<T> b = surrogate::phi(tape, plan.dbi_batches[1], spec);
    std::vector<DBIExample<T>> ex{{a, b, 1}};
    if (plan.dbi_batches.size() >= 3) ex.push_back({a, surrogate::phi(tape, plan.dbi_batches[2], spec), 0});
    dbi = loss_dbi(tape, ex, cfg.sim_eps);
  }
  Var<T> total = combined_loss(sur, mr, dbi, cfg);
  if (terms) *terms = {sur.item(), mr.item(), dbi.item(), total.item()};
  return total;
}

/// One step of update-model on `target_id`: sample, differentiate the
/// combined loss, apply `opt` to every parameter.
template <class T>
LossTerms update_model(const MetaDataset& meta, nd::ParamSet<T>& params, nd::OptimizerState& opt,
                       const std::string& target_id, const ModelSpec& spec, const TrainConfig& cfg,
                       std::mt19937_64& rng) {
  const bool need_dbi = cfg.alpha_dbi != 0.0 && spec.learned_mf();
  const UpdatePlan plan = sample_plan(meta, target_id, cfg, rng, cfg.alpha_mr != 0.0, need_dbi);
  LossTerms terms;
  nd::ParamSet<T> grads;
  {
    Tape<T> tape(&params, true, rng());
    Var<T> loss = plan_loss(tape, plan, meta.grid, spec, cfg, &terms);
    if (!std::isfinite(terms.total)) throw NumericError("update_model: loss is not finite");
    grads = tape.backward(loss);
  }
  nd::optimizer_step(opt, params, grads);
  return terms;
}

}  // namespace dmfbs::objective
