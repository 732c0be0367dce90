#pragma once

#include <random>
#include <string>
#include <vector>

#include "dmfbs/genmeta/synth.hpp"
#include "dmfbs/metadata/meta_dataset.hpp"
#include "dmfbs/surrogate/model.hpp"

namespace fixtures {

using namespace dmfbs;

/// Small normalized synthetic meta-dataset over the layout grid.
inline MetaDataset small_meta(int count, std::uint64_t seed = 0, double sigma = 0.01) {
  genmeta::SynthSpec s;
  s.count = count;
  s.rows = {20, 40};
  s.features = {1, 3};
  s.classes = {2, 3};
  s.sigma = sigma;
  s.seed = seed;
  return normalize_responses(genmeta::synth(s, SearchSpace::named(SpaceName::Layout)).meta);
}

/// A narrow model so double-precision gradient checks stay cheap.
inline surrogate::ModelSpec tiny_spec(const MetaDataset& meta) {
  surrogate::ModelSpec spec;
  spec.config_width = encoded_width(meta.space);
  spec.mfe.width = 6;
  spec.mfe.blocks = 1;
  spec.mfe.block_depth = 2;
  spec.mfe.e2_depth = 1;
  spec.mfe.k = 4;
  spec.sur.psi1 = {8, 6};
  spec.sur.psi2_depth = 1;
  spec.sur.psi2_width = 4;
  return spec;
}

inline surrogate::ModelSpec full_spec(const MetaDataset& meta) {
  surrogate::ModelSpec spec;
  spec.config_width = encoded_width(meta.space);
  return spec;
}

inline Dataset gaussian(const std::string& id, std::size_t rows, std::size_t features, int classes,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.id = id;
  d.rows = rows;
  d.features = features;
  d.num_classes = classes;
  std::normal_distribution<float> n(0, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(classes));
    for (std::size_t f = 0; f < features; ++f) d.x.push_back(n(rng) + static_cast<float>(y));
    d.y.push_back(y);
    d.split.push_back(i % 5 == 3 ? Split::Valid : (i % 5 == 4 ? Split::Test : Split::Train));
  }
  return d;
}

}  // namespace fixtures
