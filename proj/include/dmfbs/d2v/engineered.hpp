#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dmfbs/errors.hpp"
#include "dmfbs/metadata/dataset.hpp"

namespace dmfbs::d2v {

inline constexpr std::size_t kEngineeredCount = 10;

/// Compact hand-crafted metafeatures, in order:
///   log I, log F, log C, class entropy (nats), imbalance ratio (max/min class count),
///   mean, std, skewness, excess kurtosis of the per-feature means,
///   mean |Pearson correlation| between each feature and the label.
/// Moments use the population convention; undefined ratios are reported as 0.
inline std::vector<double> engineered_mf(const Dataset& d) {
  if (d.rows < 1 || d.features < 1 || d.num_classes < 1) throw UsageError("engineered_mf needs a nonempty dataset");
  const double I = static_cast<double>(d.rows);
  std::vector<double> out;
  out.push_back(std::log(I));
  out.push_back(std::log(static_cast<double>(d.features)));
  out.push_back(std::log(static_cast<double>(d.num_classes)));

  std::vector<double> counts(static_cast<std::size_t>(d.num_classes), 0.0);
  for (int y : d.y) counts[static_cast<std::size_t>(y)] += 1.0;
  double entropy = 0.0, cmax = 0.0, cmin = I;
  for (double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / I;
    entropy -= p * std::log(p);
    cmax = std::max(cmax, c);
    cmin = std::min(cmin, c);
  }
  out.push_back(entropy);
  out.push_back(cmax / cmin);

  std::vector<double> means(d.features, 0.0);
  for (std::size_t f = 0; f < d.features; ++f) {
    for (std::size_t i = 0; i < d.rows; ++i) means[f] += d.at(i, f);
    means[f] /= I;
  }
  const double nf = static_cast<double>(d.features);
  double mu = 0.0;
  for (double m : means) mu += m;
  mu /= nf;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double m : means) {
    const double z = m - mu;
    m2 += z * z;
    m3 += z * z * z;
    m4 += z * z * z * z;
  }
  m2 /= nf;
  m3 /= nf;
  m4 /= nf;
  const double sd = std::sqrt(m2);
  out.push_back(mu);
  out.push_back(sd);
  out.push_back(sd > 1e-12 ? m3 / (sd * sd * sd) : 0.0);
  out.push_back(sd > 1e-12 ? m4 / (m2 * m2) - 3.0 : 0.0);

  double ybar = 0.0;
  for (int y : d.y) ybar += y;
  ybar /= I;
  double syy = 0.0;
  for (int y : d.y) syy += (y - ybar) * (y - ybar);
  double corr = 0.0;
  for (std::size_t f = 0; f < d.features; ++f) {
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < d.rows; ++i) {
      const double dx = d.at(i, f) - means[f];
      sxy += dx * (d.y[i] - ybar);
      sxx += dx * dx;
    }
    if (sxx > 1e-12 && syy > 1e-12) corr += std::abs(sxy / std::sqrt(sxx * syy));
  }
  out.push_back(corr / nf);
  return out;
}

}  // namespace dmfbs::d2v
