#pragma once

#include <algorithm>
#include <iterator>
#include <numeric>
#include <random>
#include <vector>

#include "dmfbs/errors.hpp"
#include "dmfbs/metadata/dataset.hpp"

namespace dmfbs {

/// Sampling ranges for batch(). Row counts are 2^k for k in [min_log2_rows, max_log2_rows].
struct BatchSpec {
  int min_log2_rows = 4;
  int max_log2_rows = 8;
};

/// A joint row/column/class sample of a parent dataset.
struct Batch {
  Dataset data;
  std::vector<std::size_t> rows;      // parent row indices
  std::vector<std::size_t> features;  // parent feature indices
  std::vector<int> classes;           // classes[new label] = parent label
};

/// Draws a batch from the train rows of `d` (all rows if there is no train
/// split). Class count is uniform in {2..C}, row count uniform over the
/// powers of two (capped at the eligible rows), feature count uniform in
/// {1..F}. Kept classes are relabeled 0..k-1 in ascending parent order.
inline Batch batch(const Dataset& d, std::mt19937_64& rng, const BatchSpec& spec = {}) {
  if (d.rows < 1 || d.features < 1 || d.num_classes < 2) throw UsageError("batch() needs a nonempty dataset");
  std::vector<std::size_t> pool = d.rows_in(Split::Train);
  if (pool.empty()) {
    pool.resize(d.rows);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }

  // Classes present in the pool; normally all C of them.
  std::vector<int> classes;
  for (std::size_t r : pool) classes.push_back(d.y[r]);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::shuffle(classes.begin(), classes.end(), rng);
  const int present = static_cast<int>(classes.size());
  const int k = std::uniform_int_distribution<int>(std::min(2, present), present)(rng);
  classes.resize(static_cast<std::size_t>(k));
  std::sort(classes.begin(), classes.end());

  std::vector<int> relabel(static_cast<std::size_t>(d.num_classes), -1);
  for (std::size_t i = 0; i < classes.size(); ++i) relabel[static_cast<std::size_t>(classes[i])] = static_cast<int>(i);
  std::vector<std::size_t> eligible;
  for (std::size_t r : pool)
    if (relabel[static_cast<std::size_t>(d.y[r])] >= 0) eligible.push_back(r);

  const int p = std::uniform_int_distribution<int>(spec.min_log2_rows, spec.max_log2_rows)(rng);
  const std::size_t n_rows = std::min(std::size_t{1} << p, eligible.size());
  std::vector<std::size_t> rows;
  std::sample(eligible.begin(), eligible.end(), std::back_inserter(rows), n_rows, rng);

  const std::size_t n_feat = std::uniform_int_distribution<std::size_t>(1, d.features)(rng);
  std::vector<std::size_t> features = all_features(d);
  std::shuffle(features.begin(), features.end(), rng);
  features.resize(n_feat);
  std::sort(features.begin(), features.end());

  Batch b;
  b.data = subset(d, rows, features);
  b.data.num_classes = std::max(k, 2);
  for (auto& y : b.data.y) y = relabel[static_cast<std::size_t>(y)];
  b.rows = std::move(rows);
  b.features = std::move(features);
  b.classes = std::move(classes);
  return b;
}

}  // namespace dmfbs
