#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmfbs/errors.hpp"
#include "dmfbs/metadata/dataset.hpp"
#include "dmfbs/metadata/space.hpp"

namespace dmfbs {

/// One (dataset, hyperparameter, response) triple.
struct Response {
  std::string dataset_id;
  int config_id = 0;
  double loss = 0.0;
};

/// dataset id -> (config id -> loss). Keys make (dataset, config) pairs unique.
using ResponseTable = std::map<std::string, std::map<int, double>>;

struct MetaDataset {
  SearchSpace space;
  std::vector<Dataset> datasets;
  std::vector<Config> grid;
  ResponseTable responses;
  bool normalized = false;

  const Dataset& dataset(const std::string& id) const {
    for (const auto& d : datasets)
      if (d.id == id) return d;
    throw UsageError("unknown dataset '" + id + "'");
  }

  std::vector<std::string> dataset_ids() const {
    std::vector<std::string> ids;
    for (const auto& d : datasets) ids.push_back(d.id);
    return ids;
  }

  const Config& config(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= grid.size() || grid[static_cast<std::size_t>(id)].id != id) {
      auto it = std::find_if(grid.begin(), grid.end(), [id](const Config& c) { return c.id == id; });
      if (it == grid.end()) throw UsageError("unknown config id " + std::to_string(id));
      return *it;
    }
    return grid[static_cast<std::size_t>(id)];
  }

  double loss(const std::string& dataset_id, int config_id) const {
    auto d = responses.find(dataset_id);
    if (d == responses.end()) throw UsageError("no responses for dataset '" + dataset_id + "'");
    auto c = d->second.find(config_id);
    if (c == d->second.end()) {
      throw UsageError("missing response for dataset '" + dataset_id + "', config " + std::to_string(config_id));
    }
    return c->second;
  }

  /// Denormalized triples in (dataset id, config id) order.
  std::vector<Response> triples() const {
    std::vector<Response> out;
    for (const auto& [id, row] : responses)
      for (const auto& [cfg, loss] : row) out.push_back({id, cfg, loss});
    return out;
  }

  std::size_t triple_count() const {
    std::size_t n = 0;
    for (const auto& [id, row] : responses) n += row.size();
    return n;
  }
};

/// Per-dataset min-max map of every loss onto [0, 100] (best config -> 0).
inline MetaDataset normalize_responses(const MetaDataset& meta) {
  MetaDataset out = meta;
  for (auto& [id, row] : out.responses) {
    if (row.empty()) continue;
    auto [lo_it, hi_it] = std::minmax_element(row.begin(), row.end(),
                                              [](const auto& a, const auto& b) { return a.second < b.second; });
    const double lo = lo_it->second, hi = hi_it->second;
    if (!(hi > lo)) throw DegenerateSurfaceError("dataset '" + id + "' has a constant response surface");
    for (auto& [cfg, loss] : row) loss = 100.0 * (loss - lo) / (hi - lo);
  }
  out.normalized = true;
  return out;
}

/// Keeps only the responses of the listed datasets (datasets and grid untouched).
inline ResponseTable restrict_responses(const ResponseTable& table, const std::vector<std::string>& ids) {
  ResponseTable out;
  for (const auto& id : ids) {
    auto it = table.find(id);
    if (it != table.end()) out.emplace(id, it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation folds

struct FoldSplit {
  int fold = 0;
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;
};

/// k folds over a seeded shuffle. Each id lands in exactly one test part;
/// validation takes round(N * 16/120) ids following the test block
/// cyclically; the rest train (120 ids, k = 5 -> 80/16/24).
inline std::vector<FoldSplit> split_folds(const std::vector<std::string>& ids, int k, std::uint64_t seed) {
  if (k < 2) throw UsageError("split_folds needs k >= 2");
  const std::size_t n = ids.size();
  const auto valid_n = static_cast<std::size_t>(std::llround(static_cast<double>(n) * 16.0 / 120.0));
  const std::size_t kk = static_cast<std::size_t>(k);
  const std::size_t min_test = n / kk;
  if (min_test < 1 || valid_n < 1 || n < min_test + 1 + valid_n + 1) {
    throw UsageError("split_folds: " + std::to_string(n) + " datasets are too few for " + std::to_string(k) +
                     " folds with nonempty train/valid/test parts");
  }
  std::vector<std::string> order = ids;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  // Block boundaries: the first n % k blocks get one extra id.
  std::vector<std::size_t> start(kk + 1, 0);
  for (std::size_t f = 0; f < kk; ++f) start[f + 1] = start[f] + n / kk + (f < n % kk ? 1 : 0);

  std::vector<FoldSplit> folds;
  for (std::size_t f = 0; f < kk; ++f) {
    FoldSplit split;
    split.fold = static_cast<int>(f);
    for (std::size_t i = start[f]; i < start[f + 1]; ++i) split.test.push_back(order[i]);
    const std::size_t rest = n - split.test.size();
    if (rest < valid_n + 1) throw UsageError("split_folds: not enough datasets left for training");
    for (std::size_t j = 0; j < rest; ++j) {
      const std::string& id = order[(start[f + 1] + j) % n];
      (j < valid_n ? split.valid : split.train).push_back(id);
    }
    folds.push_back(std::move(split));
  }
  return folds;
}

inline nlohmann::json folds_to_json(const std::vector<FoldSplit>& folds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : folds) arr.push_back({{"train", f.train}, {"valid", f.valid}, {"test", f.test}});
  return {{"folds", arr}};
}

inline std::vector<FoldSplit> folds_from_json(const nlohmann::json& j) {
  std::vector<FoldSplit> out;
  int i = 0;
  for (const auto& f : j.at("folds")) {
    out.push_back({i++, f.at("train").get<std::vector<std::string>>(), f.at("valid").get<std::vector<std::string>>(),
                   f.at("test").get<std::vector<std::string>>()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Responses CSV: dataset_id,config_id,loss

inline void write_responses_csv(std::ostream& out, const ResponseTable& table) {
  out << "dataset_id,config_id,loss\n";
  out.precision(17);
  for (const auto& [id, row] : table)
    for (const auto& [cfg, loss] : row) out << id << ',' << cfg << ',' << loss << '\n';
}

/// Rows that fail to parse (e.g. a torn final line) are skipped.
inline ResponseTable read_responses_csv(std::istream& in) {
  ResponseTable table;
  std::string line;
  std::getline(in, line);
  if (line.rfind("dataset_id,config_id,loss", 0) != 0) throw IoError("responses file lacks the expected header");
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string id, cfg, loss;
    if (!std::getline(ss, id, ',') || !std::getline(ss, cfg, ',') || !std::getline(ss, loss)) continue;
    try {
      std::size_t used = 0;
      const double value = std::stod(loss, &used);
      if (used != loss.size()) continue;
      table[id][std::stoi(cfg)] = value;
    } catch (const std::logic_error&) {
      continue;
    }
  }
  return table;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(1) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Meta-dataset directory:
//   meta.json                {space, datasets: [ids]}
//   grid.json                grid file
//   datasets/<id>.csv        dataset files
//   responses.csv            raw losses
//   responses_normalized.csv per-dataset [0, 100] losses
//   splits.json              optional fold splits

/// Writes a raw (unnormalized) meta-dataset. The normalized sibling is written
/// when every dataset's surface is non-constant.
inline void save_meta_dataset(const std::filesystem::path& dir, const MetaDataset& raw) {
  namespace fs = std::filesystem;
  if (raw.normalized) throw UsageError("save_meta_dataset expects raw responses");
  fs::create_directories(dir / "datasets");
  write_json_file(dir / "meta.json", {{"space", to_string(raw.space.name)}, {"datasets", raw.dataset_ids()}});
  write_json_file(dir / "grid.json", grid_to_json(raw.space, raw.grid));
  for (const auto& d : raw.datasets) save_dataset_csv(dir / "datasets" / (d.id + ".csv"), d);
  {
    std::ofstream out(dir / "responses.csv");
    write_responses_csv(out, raw.responses);
  }
  try {
    const MetaDataset norm = normalize_responses(raw);
    std::ofstream out(dir / "responses_normalized.csv");
    write_responses_csv(out, norm.responses);
  } catch (const DegenerateSurfaceError&) {
    fs::remove(dir / "responses_normalized.csv");
  }
}

/// Loads a meta-dataset directory; `normalized` picks the response file.
/// Predictors are z-scored with train-split statistics.
inline MetaDataset load_meta_dataset(const std::filesystem::path& dir, bool normalized = true) {
  const auto meta = read_json_file(dir / "meta.json");
  MetaDataset m;
  m.space = SearchSpace::named(parse_space(meta.at("space").get<std::string>()));
  m.grid = grid_from_json(read_json_file(dir / "grid.json"));
  for (const auto& id : meta.at("datasets")) {
    m.datasets.push_back(load_dataset_csv(dir / "datasets" / (id.get<std::string>() + ".csv")));
  }
  const auto file = dir / (normalized ? "responses_normalized.csv" : "responses.csv");
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  m.responses = read_responses_csv(in);
  m.normalized = normalized;
  return m;
}

}  // namespace dmfbs
