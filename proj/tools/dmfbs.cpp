// dmfbs command-line driver: synth, genmeta, metatrain, hpo, eval.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dmfbs/eval/aggregate.hpp"
#include "dmfbs/eval/experiment.hpp"
#include "dmfbs/genmeta/build.hpp"
#include "dmfbs/genmeta/synth.hpp"
#include "dmfbs/metalearn/reptile.hpp"
#include "dmfbs/nd/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace dmfbs;

namespace {

void write_splits(const fs::path& dir, const std::vector<std::string>& ids, int folds, std::uint64_t seed) {
  write_json_file(dir / "splits.json", folds_to_json(split_folds(ids, folds, seed)));
}

FoldSplit load_fold(const fs::path& meta_dir, int fold) {
  const auto folds = folds_from_json(read_json_file(meta_dir / "splits.json"));
  if (fold < 0 || fold >= static_cast<int>(folds.size())) {
    throw UsageError("fold " + std::to_string(fold) + " out of range [0, " + std::to_string(folds.size()) + ")");
  }
  return folds[static_cast<std::size_t>(fold)];
}

struct SynthArgs {
  std::string out;
  std::string space = "layout";
  std::uint64_t seed = 0;
  int count = 60;
  double sigma = 0.01;
  int folds = 5;
};

int cmd_synth(const SynthArgs& a) {
  genmeta::SynthSpec spec;
  spec.count = a.count;
  spec.sigma = a.sigma;
  spec.seed = a.seed;
  const auto res = genmeta::synth(spec, SearchSpace::named(parse_space(a.space)));
  save_meta_dataset(a.out, res.meta);
  write_json_file(fs::path(a.out) / "oracle.json", res.oracle.to_json());
  write_splits(a.out, res.meta.dataset_ids(), a.folds, a.seed);
  std::cout << "wrote " << res.meta.datasets.size() << " datasets x " << res.meta.grid.size() << " configs to "
            << a.out << '\n';
  return 0;
}

struct GenmetaArgs {
  std::string meta;  // directory of dataset CSVs
  std::string out;
  std::string space = "layout";
  std::uint64_t seed = 0;
  int epochs = 50;
  int configs = 0;  // 0 = full grid
  int folds = 5;
};

int cmd_genmeta(const GenmetaArgs& a) {
  std::vector<fs::path> files;
  if (!fs::is_directory(a.meta)) throw IoError("dataset directory '" + a.meta + "' does not exist");
  for (const auto& e : fs::directory_iterator(a.meta))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("no dataset CSVs found in '" + a.meta + "'");
  std::vector<Dataset> datasets;
  for (const auto& f : files) datasets.push_back(load_dataset_csv(f));

  const SearchSpace space = SearchSpace::named(parse_space(a.space));
  std::vector<Config> grid = enumerate_grid(space);
  if (a.configs > 0 && static_cast<std::size_t>(a.configs) < grid.size()) {
    std::mt19937_64 rng(a.seed);
    std::vector<Config> sub;
    std::sample(grid.begin(), grid.end(), std::back_inserter(sub), a.configs, rng);
    grid = std::move(sub);
  }
  genmeta::TargetNetSpec spec;
  spec.epochs = a.epochs;
  const auto report = genmeta::build_meta_dataset(
      datasets, space, grid, spec, a.out, a.seed, [](const std::string& d, int c, const genmeta::TargetNetResult& r) {
        std::cerr << d << " config " << c << " val_loss " << r.val_loss << (r.diverged ? " (diverged)" : "") << '\n';
      });
  const auto ids = report.meta.dataset_ids();
  const auto valid_n = static_cast<std::size_t>(std::llround(static_cast<double>(ids.size()) * 16.0 / 120.0));
  if (ids.size() >= static_cast<std::size_t>(a.folds) && valid_n >= 1) {
    try {
      write_splits(a.out, ids, a.folds, a.seed);
    } catch (const UsageError& e) {
      std::cerr << "note: no splits.json written: " << e.what() << '\n';
    }
  } else {
    std::cerr << "note: too few datasets for " << a.folds << " folds; no splits.json written\n";
  }
  std::cout << "ran " << report.jobs_run << " jobs (" << report.diverged << " diverged), "
            << report.meta.triple_count() << " triples in " << a.out << '\n';
  return 0;
}

struct MetatrainArgs {
  std::string meta;
  std::string ckpt;
  std::string progress;
  std::string method = "dmfbs";
  int fold = 0;
  std::uint64_t seed = 0;
  objective::TrainConfig train;
  metalearn::MetaConfig meta_cfg;
};

int cmd_metatrain(const MetatrainArgs& a) {
  if (a.method != "dmfbs" && a.method != "mfbs-fixed") {
    throw UsageError("metatrain supports --method dmfbs or mfbs-fixed, not '" + a.method + "'");
  }
  const MetaDataset meta = load_meta_dataset(a.meta);
  const FoldSplit split = load_fold(a.meta, a.fold);
  const auto spec = eval::model_spec(meta, a.method);
  std::mt19937_64 rng(a.seed);
  const auto theta0 = surrogate::init_model<float>(spec, rng());
  metalearn::MetaConfig mcfg = a.meta_cfg;
  mcfg.eval_budget = std::min<int>(mcfg.eval_budget, static_cast<int>(meta.grid.size()));
  const auto result = metalearn::meta_learn_init(meta, theta0, split.train, split.valid, spec, a.train, mcfg, rng);
  nd::save_checkpoint(a.ckpt, result.best);
  const std::string progress = a.progress.empty() ? a.ckpt + ".progress.csv" : a.progress;
  {
    std::ofstream out(progress);
    if (!out) throw IoError("cannot write " + progress);
    metalearn::write_progress_csv(out, result.progress);
  }
  std::cout << "best meta-valid regret " << result.best_regret << " at outer iteration " << result.best_iter << " of "
            << result.iterations << "; checkpoint " << a.ckpt << '\n';
  return 0;
}

struct HpoArgs {
  std::string meta;
  std::string ckpt;
  std::string out;
  std::vector<std::string> methods{"random"};
  std::vector<std::uint64_t> seeds{0};
  int fold = 0;
  int budget = 20;
  int init_budget = 1;
  int finetune_steps = 50;
  int jobs = 1;
};

int cmd_hpo(const HpoArgs& a) {
  for (const auto& m : a.methods)
    if (!eval::is_known_method(m)) throw UsageError("unknown method '" + m + "'");
  const MetaDataset meta = load_meta_dataset(a.meta);
  const FoldSplit split = load_fold(a.meta, a.fold);
  nd::ParamSet<float> theta;
  bool need_ckpt = false;
  for (const auto& m : a.methods) need_ckpt |= m == "dmfbs" || m == "mfbs-fixed";
  if (need_ckpt) {
    if (a.ckpt.empty()) throw UsageError("--ckpt is required for dmfbs and mfbs-fixed");
    theta = nd::load_checkpoint<float>(a.ckpt);
  }
  fs::create_directories(a.out);

  struct Job {
    std::string method;
    std::string dataset;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& m : a.methods)
    for (const auto& d : split.test)
      for (auto s : a.seeds) jobs.push_back({m, d, s});

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::string first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& j = jobs[i];
      try {
        eval::RunOptions opt;
        opt.method = j.method;
        opt.budget = a.budget;
        opt.init_budget = a.init_budget;
        opt.finetune_steps = a.finetune_steps;
        opt.seed = j.seed;
        opt.fold = a.fold;
        const auto run = eval::run_method(meta, j.dataset, split.train, opt, need_ckpt ? &theta : nullptr);
        hpo::validate_run(run);
        const auto name = j.method + "_fold" + std::to_string(a.fold) + "_" + j.dataset + "_s" + std::to_string(j.seed);
        write_json_file(fs::path(a.out) / (name + ".json"), hpo::run_to_json(run));
        std::lock_guard lock(mu);
        std::cerr << name << " best " << hpo::running_min(run).back() << '\n';
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::max(1, a.jobs); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (!first_error.empty()) throw std::runtime_error(first_error);
  std::cout << "wrote " << jobs.size() << " runs to " << a.out << '\n';
  return 0;
}

struct EvalArgs {
  std::string runs;
  std::string out;
  std::vector<int> checkpoints = eval::default_checkpoints();
};

int cmd_eval(const EvalArgs& a) {
  const auto runs = eval::load_runs(a.runs);
  const auto rows = eval::aggregate(runs, a.checkpoints);
  if (a.out.empty()) {
    eval::write_summary_csv(std::cout, rows);
  } else {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write " + a.out);
    eval::write_summary_csv(out, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DMFBS transfer-learning hyperparameter optimization"};
  app.require_subcommand(1);
  const std::vector<std::string> spaces{"layout", "regularization", "optimization"};

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic meta-dataset with a closed-form response oracle");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--seed", sa.seed, "random seed");
  synth->add_option("--count", sa.count, "number of datasets")->check(CLI::PositiveNumber);
  synth->add_option("--space", sa.space, "search space")->check(CLI::IsMember(spaces));
  synth->add_option("--sigma", sa.sigma, "response noise std")->check(CLI::NonNegativeNumber);
  synth->add_option("--folds", sa.folds, "cross-validation folds")->check(CLI::Range(2, 1000));

  GenmetaArgs ga;
  auto* genmeta = app.add_subcommand("genmeta", "train target networks and build a meta-dataset");
  genmeta->add_option("--meta", ga.meta, "directory of dataset CSVs (f0..,label,split)")->required();
  genmeta->add_option("--out", ga.out, "output meta-dataset directory")->required();
  genmeta->add_option("--space", ga.space, "search space")->check(CLI::IsMember(spaces));
  genmeta->add_option("--seed", ga.seed, "random seed");
  genmeta->add_option("--epochs", ga.epochs, "target-net epochs")->check(CLI::NonNegativeNumber);
  genmeta->add_option("--configs", ga.configs, "seeded sub-grid size (0 = full grid)")->check(CLI::NonNegativeNumber);
  genmeta->add_option("--folds", ga.folds, "cross-validation folds")->check(CLI::Range(2, 1000));

  MetatrainArgs ma;
  auto* metatrain = app.add_subcommand("metatrain", "meta-learn the surrogate initialization on one fold");
  metatrain->add_option("--meta", ma.meta, "meta-dataset directory")->required()->check(CLI::ExistingDirectory);
  metatrain->add_option("--fold", ma.fold, "fold index");
  metatrain->add_option("--seed", ma.seed, "random seed");
  metatrain->add_option("--ckpt", ma.ckpt, "output checkpoint path")->required();
  metatrain->add_option("--progress", ma.progress, "progress CSV (default <ckpt>.progress.csv)");
  metatrain->add_option("--method", ma.method, "surrogate variant")->check(CLI::IsMember({"dmfbs", "mfbs-fixed"}));
  metatrain->add_option("--alpha-mr", ma.train.alpha_mr, "manifold-regularization weight");
  metatrain->add_option("--alpha-dbi", ma.train.alpha_dbi, "dataset-identification weight");
  metatrain->add_option("--lr", ma.train.lr, "update_model learning rate");
  metatrain->add_option("--inner-steps", ma.meta_cfg.inner_steps, "inner steps v")->check(CLI::NonNegativeNumber);
  metatrain->add_option("--meta-batch", ma.meta_cfg.meta_batch, "meta-batch size n")->check(CLI::PositiveNumber);
  metatrain->add_option("--outer-iters", ma.meta_cfg.outer_iters, "outer iteration cap")->check(CLI::NonNegativeNumber);
  metatrain->add_option("--outer-lr", ma.meta_cfg.outer_lr, "outer learning rate");
  metatrain->add_option("--eval-every", ma.meta_cfg.eval_every, "outer iterations between evaluations");
  metatrain->add_option("--patience", ma.meta_cfg.patience, "evaluations without improvement before stopping");
  metatrain->add_option("--budget", ma.meta_cfg.eval_budget, "meta-valid greedy budget")->check(CLI::PositiveNumber);

  HpoArgs ha;
  auto* hpo = app.add_subcommand("hpo", "run HPO methods on the meta-test datasets of one fold");
  hpo->add_option("--meta", ha.meta, "meta-dataset directory")->required()->check(CLI::ExistingDirectory);
  hpo->add_option("--fold", ha.fold, "fold index");
  hpo->add_option("--seed", ha.seeds, "random seed(s)");
  hpo->add_option("--method", ha.methods, "method(s)")->check(CLI::IsMember(eval::known_methods()));
  hpo->add_option("--budget", ha.budget, "trials per run B")->check(CLI::PositiveNumber);
  hpo->add_option("--init-budget", ha.init_budget, "zero-shot trials b")->check(CLI::PositiveNumber);
  hpo->add_option("--ckpt", ha.ckpt, "meta-learned checkpoint");
  hpo->add_option("--out", ha.out, "directory for run records")->required();
  hpo->add_option("--finetune-steps", ha.finetune_steps, "update_model steps per trial")->check(CLI::NonNegativeNumber);
  hpo->add_option("--jobs", ha.jobs, "worker threads")->check(CLI::PositiveNumber);

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "aggregate run records into a regret summary");
  evalc->add_option("--runs", ea.runs, "directory of run records")->required();
  evalc->add_option("--out", ea.out, "summary CSV (default stdout)");
  evalc->add_option("--trials", ea.checkpoints, "regret checkpoints")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(sa);
    if (*genmeta) return cmd_genmeta(ga);
    if (*metatrain) return cmd_metatrain(ma);
    if (*hpo) return cmd_hpo(ha);
    if (*evalc) return cmd_eval(ea);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
