#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dmfbs/d2v/engineered.hpp"
#include "dmfbs/errors.hpp"
#include "dmfbs/hash.hpp"
#include "dmfbs/hpo/dmfbs.hpp"
#include "dmfbs/metadata/meta_dataset.hpp"
#include "dmfbs/surrogate/model.hpp"

namespace dmfbs::eval {

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> v{"random", "avg-rank", "nn-mf", "dmfbs", "dmfbs-ri", "mfbs-fixed"};
  return v;
}

inline bool is_known_method(const std::string& m) {
  for (const auto& k : known_methods())
    if (k == m) return true;
  return false;
}

/// Methods that fine-tune a surrogate and need a parameter set.
inline bool uses_surrogate(const std::string& m) { return m == "dmfbs" || m == "dmfbs-ri" || m == "mfbs-fixed"; }

/// Engineered metafeatures of every dataset's train view.
inline std::shared_ptr<const surrogate::FixedMetafeatures> engineered_table(const MetaDataset& meta) {
  auto table = std::make_shared<surrogate::FixedMetafeatures>();
  for (const auto& d : meta.datasets) (*table)[d.id] = d2v::engineered_mf(train_view(d));
  return table;
}

/// Model spec for `method` over `meta`'s search space.
inline surrogate::ModelSpec model_spec(const MetaDataset& meta, const std::string& method) {
  surrogate::ModelSpec spec;
  spec.config_width = encoded_width(meta.space);
  if (method == "mfbs-fixed") spec.fixed_mf = engineered_table(meta);
  return spec;
}

/// Per-run seed: stable in (seed, dataset id).
inline std::uint64_t run_seed(std::uint64_t seed, const std::string& dataset_id) {
  return seed * 0x9E3779B97F4A7C15ull ^ fnv1a(dataset_id);
}

struct RunOptions {
  std::string method = "random";
  int budget = 20;
  int init_budget = 1;
  int finetune_steps = 50;
  std::uint64_t seed = 0;
  int fold = 0;
};

/// One HPO run of `opt.method` on `target_id`. `meta` holds normalized
/// responses; `train_ids` are the fold's meta-train datasets. `theta` is the
/// meta-learned initialization for dmfbs/mfbs-fixed and ignored otherwise.
inline hpo::HPORun run_method(const MetaDataset& meta, const std::string& target_id,
                              const std::vector<std::string>& train_ids, const RunOptions& opt,
                              const nd::ParamSet<float>* theta = nullptr) {
  if (!is_known_method(opt.method)) throw UsageError("unknown method '" + opt.method + "'");
  const auto row_it = meta.responses.find(target_id);
  if (row_it == meta.responses.end()) throw UsageError("no responses for '" + target_id + "'");
  const auto ids = hpo::grid_ids(meta.grid);
  const auto budget = static_cast<std::size_t>(opt.budget);
  if (opt.budget < 1 || budget > ids.size()) {
    throw UsageError("budget " + std::to_string(opt.budget) + " must lie in [1, " + std::to_string(ids.size()) + "]");
  }
  std::mt19937_64 rng(run_seed(opt.seed, target_id));
  hpo::HPORun run;
  if (opt.method == "random") {
    run = hpo::run_from_sequence(opt.method, target_id, hpo::baseline_random(ids, budget, rng), row_it->second);
  } else if (opt.method == "avg-rank") {
    run = hpo::run_from_sequence(opt.method, target_id, hpo::baseline_avg_rank(meta.responses, train_ids, ids, budget),
                                 row_it->second);
  } else if (opt.method == "nn-mf") {
    std::map<std::string, std::vector<double>> train_mf;
    for (const auto& id : train_ids) train_mf[id] = d2v::engineered_mf(train_view(meta.dataset(id)));
    const auto target_mf = d2v::engineered_mf(train_view(meta.dataset(target_id)));
    run = hpo::run_from_sequence(opt.method, target_id,
                                 hpo::baseline_nn_mf(target_mf, train_mf, meta.responses, ids, budget), row_it->second);
  } else {
    const auto spec = model_spec(meta, opt.method);
    nd::ParamSet<float> init;
    if (opt.method == "dmfbs-ri") {
      init = surrogate::init_model<float>(spec, rng());
    } else {
      if (theta == nullptr) throw UsageError("method '" + opt.method + "' needs a meta-learned checkpoint");
      init = *theta;
    }
    hpo::HPOConfig cfg;
    cfg.budget = opt.budget;
    cfg.init_budget = opt.init_budget;
    cfg.finetune_steps = opt.finetune_steps;
    run = hpo::run_dmfbs(meta, target_id, train_ids, init, spec, cfg, rng, opt.method);
  }
  run.fold = opt.fold;
  run.seed = opt.seed;
  run.budget = opt.budget;
  run.init_budget = opt.init_budget;
  return run;
}

}  // namespace dmfbs::eval
