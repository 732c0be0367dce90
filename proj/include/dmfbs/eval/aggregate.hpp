#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "dmfbs/errors.hpp"
#include "dmfbs/hpo/greedy.hpp"

namespace dmfbs::eval {

using hpo::HPORun;

inline const std::vector<int>& default_checkpoints() {
  static const std::vector<int> v{5, 20, 33, 67, 100};
  return v;
}

struct SummaryRow {
  std::string method;
  int trial = 0;
  double mean_regret = 0.0;
  double std_regret = 0.0;  // population (divide by number of folds)
  std::size_t n_runs = 0;
};

/// Mean and population std over folds of the per-fold mean regret at each
/// checkpoint trial. Regret at trial t is the running minimum of the first t
/// normalized losses. Checkpoints beyond the shared budget are skipped.
inline std::vector<SummaryRow> aggregate(const std::vector<HPORun>& runs,
                                         const std::vector<int>& checkpoints = default_checkpoints()) {
  if (runs.empty()) throw UsageError("aggregate needs at least one run");
  const int budget = runs.front().budget;
  for (const auto& r : runs) {
    if (r.budget != budget) {
      throw UsageError("runs disagree on the budget (" + std::to_string(budget) + " vs " + std::to_string(r.budget) +
                       " for " + r.method + " on '" + r.dataset_id + "')");
    }
    if (r.trials.empty()) throw UsageError("run for " + r.method + " on '" + r.dataset_id + "' has no trials");
  }

  // method -> fold -> curves
  std::map<std::string, std::map<int, std::vector<hpo::RegretCurve>>> grouped;
  for (const auto& r : runs) grouped[r.method][r.fold].push_back(hpo::running_min(r));

  std::vector<int> ts;
  for (int t : checkpoints)
    if (t >= 1 && t <= budget) ts.push_back(t);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

  std::vector<SummaryRow> out;
  for (const auto& [method, folds] : grouped) {
    for (int t : ts) {
      std::vector<double> fold_means;
      std::size_t n = 0;
      for (const auto& [fold, curves] : folds) {
        double acc = 0.0;
        for (const auto& c : curves) acc += c[std::min<std::size_t>(static_cast<std::size_t>(t), c.size()) - 1];
        fold_means.push_back(acc / static_cast<double>(curves.size()));
        n += curves.size();
      }
      double mean = 0.0;
      for (double m : fold_means) mean += m;
      mean /= static_cast<double>(fold_means.size());
      double var = 0.0;
      for (double m : fold_means) var += (m - mean) * (m - mean);
      var /= static_cast<double>(fold_means.size());
      out.push_back({method, t, mean, std::sqrt(var), n});
    }
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "# std_regret: population standard deviation over folds of per-fold mean regret\n";
  out << "method,trial,mean_regret,std_regret,n_runs\n";
  out.precision(10);
  for (const auto& r : rows)
    out << r.method << ',' << r.trial << ',' << r.mean_regret << ',' << r.std_regret << ',' << r.n_runs << '\n';
}

/// Every *.json run record under `dir` (recursive), in path order.
inline std::vector<HPORun> load_runs(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("runs directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<HPORun> runs;
  for (const auto& f : files) {
    try {
      runs.push_back(hpo::run_from_json(read_json_file(f)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed run record " + f.string() + ": " + e.what());
    }
  }
  if (runs.empty()) throw UsageError("no run records (*.json) found in '" + dir.string() + "'");
  return runs;
}

}  // namespace dmfbs::eval
