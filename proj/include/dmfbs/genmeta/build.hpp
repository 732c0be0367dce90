#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "dmfbs/errors.hpp"
#include "dmfbs/hash.hpp"
#include "dmfbs/genmeta/target_net.hpp"
#include "dmfbs/metadata/meta_dataset.hpp"

namespace dmfbs::genmeta {

struct BuildReport {
  MetaDataset meta;      // raw responses
  std::size_t jobs_run = 0;
  std::size_t diverged = 0;
};

/// Called after each finished job: (dataset id, config id, result).
using JobCallback = std::function<void(const std::string&, int, const TargetNetResult&)>;

namespace detail {

/// Reads the jobs file, drops a final line without its newline (a torn write)
/// and any unparsable rows, then rewrites it so appends start on a clean line.
inline ResponseTable load_and_compact(const std::filesystem::path& path) {
  ResponseTable done;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!text.empty() && text.back() != '\n') text.erase(text.find_last_of('\n') + 1);
    if (!text.empty()) {
      std::istringstream lines(text);
      done = read_responses_csv(lines);
    }
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    write_responses_csv(out, done);
  }
  std::filesystem::rename(tmp, path);
  return done;
}

}  // namespace detail

/// Trains a target network for every (dataset, config) pair and stores the
/// validation losses under `dir` in the meta-dataset layout. Each finished job
/// is appended to responses.csv right away; a rerun skips pairs already there.
inline BuildReport build_meta_dataset(const std::vector<Dataset>& datasets, const SearchSpace& space,
                                      const std::vector<Config>& grid, const TargetNetSpec& spec,
                                      const std::filesystem::path& dir, std::uint64_t seed = 0,
                                      const JobCallback& on_job = {}) {
  if (datasets.empty()) throw UsageError("build_meta_dataset needs at least one dataset");
  namespace fs = std::filesystem;
  fs::create_directories(dir / "datasets");
  const fs::path jobs = dir / "responses.csv";

  BuildReport report;
  report.meta.space = space;
  report.meta.grid = grid;
  report.meta.datasets = datasets;
  report.meta.responses = detail::load_and_compact(jobs);

  std::ofstream out(jobs, std::ios::app);
  if (!out) throw IoError("cannot append to " + jobs.string());
  out.precision(17);
  for (const auto& d : datasets) {
    for (const auto& c : grid) {
      auto& row = report.meta.responses[d.id];
      if (row.count(c.id)) continue;
      const std::uint64_t job_seed = seed ^ (fnv1a(d.id) + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(c.id + 1));
      const TargetNetResult r = train_target_net(d, c.raw, spec, job_seed);
      row[c.id] = r.val_loss;
      out << d.id << ',' << c.id << ',' << r.val_loss << '\n';
      out.flush();
      ++report.jobs_run;
      if (r.diverged) ++report.diverged;
      if (on_job) on_job(d.id, c.id, r);
    }
  }
  out.close();

  // Keep only the requested datasets/configs in the stored tables.
  ResponseTable kept;
  for (const auto& d : datasets)
    for (const auto& c : grid) kept[d.id][c.id] = report.meta.responses.at(d.id).at(c.id);
  report.meta.responses = std::move(kept);
  save_meta_dataset(dir, report.meta);
  return report;
}

}  // namespace dmfbs::genmeta
