#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmfbs/errors.hpp"
#include "dmfbs/metadata/meta_dataset.hpp"

namespace dmfbs::genmeta {

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct SynthSpec {
  int count = 60;
  IntRange rows{32, 128};
  IntRange features{2, 8};
  IntRange classes{2, 6};
  double sigma = 0.01;
  /// Spread of the response projection; larger moves optima further apart.
  double projection_scale = 1.0;
  std::uint64_t seed = 0;
  std::string id_prefix = "syn";
};

/// Closed-form response rule: loss(lambda, D) = ||encode(lambda) - (P z(D) + 0.5)||^2,
/// z(D) = (log I, log F, log C, class entropy / ln C) mapped to [-1, 1].
struct SynthOracle {
  SynthSpec spec;
  std::size_t width = 0;
  std::vector<double> projection;  // width x 4, row-major

  std::vector<double> stats(const Dataset& d) const {
    auto unit = [](double v, double lo, double hi) { return hi > lo ? 2.0 * (v - lo) / (hi - lo) - 1.0 : 0.0; };
    std::vector<double> counts(static_cast<std::size_t>(d.num_classes), 0.0);
    for (int y : d.y) counts[static_cast<std::size_t>(y)] += 1.0;
    double h = 0.0;
    for (double c : counts)
      if (c > 0) h -= c / static_cast<double>(d.rows) * std::log(c / static_cast<double>(d.rows));
    return {unit(std::log(static_cast<double>(d.rows)), std::log(spec.rows.lo), std::log(spec.rows.hi)),
            unit(std::log(static_cast<double>(d.features)), std::log(spec.features.lo), std::log(spec.features.hi)),
            unit(std::log(static_cast<double>(d.num_classes)), std::log(spec.classes.lo), std::log(spec.classes.hi)),
            unit(d.num_classes > 1 ? h / std::log(static_cast<double>(d.num_classes)) : 0.0, 0.0, 1.0)};
  }

  std::vector<double> center(const Dataset& d) const {
    const auto z = stats(d);
    std::vector<double> t(width, 0.5);
    for (std::size_t r = 0; r < width; ++r)
      for (std::size_t c = 0; c < 4; ++c) t[r] += projection[r * 4 + c] * z[c];
    return t;
  }

  double noiseless(const std::vector<float>& encoded, const Dataset& d) const {
    const auto t = center(d);
    double acc = 0.0;
    for (std::size_t i = 0; i < width; ++i) acc += (encoded[i] - t[i]) * (encoded[i] - t[i]);
    return acc;
  }

  /// Noiseless optimum over `grid` (lowest id on ties).
  int argmin(const std::vector<Config>& grid, const Dataset& d) const {
    int best = -1;
    double best_v = std::numeric_limits<double>::infinity();
    for (const auto& c : grid) {
      const double v = noiseless(c.encoded, d);
      if (v < best_v) {
        best_v = v;
        best = c.id;
      }
    }
    return best;
  }

  nlohmann::json to_json() const {
    return {{"width", width}, {"projection", projection}, {"rows", {spec.rows.lo, spec.rows.hi}},
            {"features", {spec.features.lo, spec.features.hi}}, {"classes", {spec.classes.lo, spec.classes.hi}},
            {"sigma", spec.sigma}, {"seed", spec.seed}};
  }
};

/// Gaussian-mixture classification dataset. Class weights come from a
/// Dirichlet with a random concentration so the label entropy varies widely; split marks are 60/15/25 over shuffled rows with every
/// class present in the train split.
inline Dataset gaussian_mixture(const std::string& id, int rows, int features, int classes, std::mt19937_64& rng) {
  if (rows < 4 * classes) throw UsageError("gaussian_mixture: too few rows for the class count");
  Dataset d;
  d.id = id;
  d.rows = static_cast<std::size_t>(rows);
  d.features = static_cast<std::size_t>(features);
  d.num_classes = classes;

  const double alpha = std::exp(std::uniform_real_distribution<double>(std::log(0.1), std::log(10.0))(rng));
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> w(static_cast<std::size_t>(classes));
  for (auto& v : w) v = gamma(rng) + 1e-3;
  std::discrete_distribution<int> label(w.begin(), w.end());
  std::vector<int> y(d.rows);
  for (std::size_t i = 0; i < d.rows; ++i) y[i] = i < 2 * static_cast<std::size_t>(classes) ? static_cast<int>(i) % classes : label(rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  const double spread = std::uniform_real_distribution<double>(0.5, 3.0)(rng);
  std::vector<double> means(static_cast<std::size_t>(classes * features));
  for (auto& m : means) m = spread * normal(rng);

  std::vector<std::size_t> order(d.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // The first 2C rows carry every class twice; keep one copy of each in train.
  std::shuffle(order.begin() + 2 * classes, order.end(), rng);
  const std::size_t n_train = std::max<std::size_t>(static_cast<std::size_t>(std::lround(0.6 * rows)), 2 * classes);
  const std::size_t n_valid = static_cast<std::size_t>(std::lround(0.15 * rows));
  std::vector<Split> split(d.rows, Split::Test);
  for (std::size_t k = 0; k < d.rows; ++k) {
    const std::size_t i = order[k];
    if (k < n_train) split[i] = Split::Train;
    else if (k < n_train + n_valid) split[i] = Split::Valid;
  }
  // Move one row of each class from train to valid so both splits see every class.
  for (int c = 0; c < classes; ++c) split[static_cast<std::size_t>(classes + c)] = Split::Valid;

  for (std::size_t i = 0; i < d.rows; ++i) {
    for (int f = 0; f < features; ++f)
      d.x.push_back(static_cast<float>(means[static_cast<std::size_t>(y[i] * features + f)] + normal(rng)));
    d.y.push_back(y[i]);
    d.split.push_back(split[i]);
  }
  d.validate();
  return d;
}

struct SynthResult {
  MetaDataset meta;  // raw responses
  SynthOracle oracle;
};

/// Synthetic meta-dataset over the full grid of `space`.
inline SynthResult synth(const SynthSpec& spec, const SearchSpace& space) {
  if (spec.sigma < 0) throw UsageError("synth: sigma must be non-negative");
  if (spec.count < 1 || spec.rows.lo > spec.rows.hi || spec.features.lo > spec.features.hi ||
      spec.classes.lo > spec.classes.hi || spec.classes.lo < 2 || spec.features.lo < 1) {
    throw UsageError("synth: empty or invalid ranges");
  }
  std::mt19937_64 rng(spec.seed);
  SynthResult out;
  out.meta.space = space;
  out.meta.grid = enumerate_grid(space);
  out.oracle.spec = spec;
  out.oracle.width = encoded_width(space);
  std::normal_distribution<double> normal(0.0, spec.projection_scale);
  out.oracle.projection.resize(out.oracle.width * 4);
  for (auto& p : out.oracle.projection) p = normal(rng);

  const int digits = static_cast<int>(std::to_string(spec.count - 1).size());
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int k = 0; k < spec.count; ++k) {
    std::string num = std::to_string(k);
    num.insert(0, static_cast<std::size_t>(std::max(0, digits - static_cast<int>(num.size()))), '0');
    // Log-uniform row count so log I covers its range evenly.
    const int rows = static_cast<int>(std::lround(std::exp(std::uniform_real_distribution<double>(
        std::log(static_cast<double>(spec.rows.lo)), std::log(static_cast<double>(spec.rows.hi)))(rng))));
    const int feats = std::uniform_int_distribution<int>(spec.features.lo, spec.features.hi)(rng);
    const int cls = std::uniform_int_distribution<int>(spec.classes.lo, spec.classes.hi)(rng);
    Dataset d = gaussian_mixture(spec.id_prefix + num, std::max(rows, 4 * cls), feats, cls, rng);
    standardize(d);
    auto& row = out.meta.responses[d.id];
    for (const auto& c : out.meta.grid) row[c.id] = out.oracle.noiseless(c.encoded, d) + spec.sigma * noise(rng);
    out.meta.datasets.push_back(std::move(d));
  }
  return out;
}

}  // namespace dmfbs::genmeta
