#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dmfbs/d2v/extractor.hpp"
#include "dmfbs/errors.hpp"
#include "dmfbs/metadata/space.hpp"
#include "dmfbs/nd/layers.hpp"

namespace dmfbs::surrogate {

using nd::DenseSpec;
using nd::LayerSpec;
using nd::ParamSet;
using nd::Tape;
using nd::Tensor;
using nd::Var;

enum class SurrogateKind {
  Dmfbs,       // learned metafeatures, meta-learned initialization
  MfbsFixed,   // precomputed metafeature vectors, no gradient into them
  DmfbsRandom  // learned metafeatures from a random initialization
};

inline const char* to_string(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::Dmfbs: return "dmfbs";
    case SurrogateKind::MfbsFixed: return "mfbs-fixed";
    case SurrogateKind::DmfbsRandom: return "dmfbs-ri";
  }
  return "?";
}

/// psi1 widths, then psi2_depth x Dense(psi2_width), then a linear Dense(1).
struct SURArch {
  std::vector<std::size_t> psi1 = {128, 64, 32, 16};
  std::size_t psi2_depth = 4;
  std::size_t psi2_width = 16;
  bool zero_head = false;
};

using FixedMetafeatures = std::map<std::string, std::vector<double>>;

struct ModelSpec {
  d2v::MFEArch mfe;
  SURArch sur;
  std::size_t config_width = 0;
  /// Set for MFBS-FIXED: metafeatures looked up by dataset id instead of extracted.
  std::shared_ptr<const FixedMetafeatures> fixed_mf;

  bool learned_mf() const { return fixed_mf == nullptr; }
  std::size_t mf_width() const {
    if (learned_mf()) return mfe.k;
    if (fixed_mf->empty()) throw UsageError("fixed metafeature table is empty");
    return fixed_mf->begin()->second.size();
  }
};

inline constexpr const char* kSurPrefix = "sur.";

inline std::vector<LayerSpec> sur_layers(const ModelSpec& spec) {
  std::vector<LayerSpec> layers;
  std::size_t in = spec.mf_width() + spec.config_width;
  for (std::size_t i = 0; i < spec.sur.psi1.size(); ++i) {
    layers.push_back(DenseSpec{std::string(kSurPrefix) + "psi1.l" + std::to_string(i), in, spec.sur.psi1[i]});
    in = spec.sur.psi1[i];
  }
  for (std::size_t i = 0; i < spec.sur.psi2_depth; ++i) {
    layers.push_back(DenseSpec{std::string(kSurPrefix) + "psi2.l" + std::to_string(i), in, spec.sur.psi2_width});
    in = spec.sur.psi2_width;
  }
  DenseSpec head{std::string(kSurPrefix) + "psi2.out", in, 1, nd::Activation::None};
  head.zero_init = spec.sur.zero_head;
  layers.push_back(head);
  return layers;
}

/// Fresh parameters: `mfe.*` (learned metafeatures only) and `sur.*`.
template <class T>
ParamSet<T> init_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.config_width == 0) throw UsageError("model needs a nonzero config width");
  std::mt19937_64 rng(seed);
  ParamSet<T> params;
  if (spec.learned_mf()) d2v::init_mfe(params, spec.mfe, rng);
  nd::init_stack(params, sur_layers(spec), rng);
  return params;
}

/// phi(D) as a [1, K] node; a constant row for fixed metafeatures.
template <class T>
Var<T> phi(Tape<T>& tape, const Dataset& d, const ModelSpec& spec) {
  if (spec.learned_mf()) return d2v::extract(tape, d, spec.mfe);
  auto it = spec.fixed_mf->find(d.id);
  if (it == spec.fixed_mf->end()) throw UsageError("no fixed metafeatures for dataset '" + d.id + "'");
  std::vector<T> row(it->second.begin(), it->second.end());
  return tape.constant(Tensor<T>::row(std::move(row)));
}

/// Scores rows of `configs` [n, E] under metafeatures `mf` [1, K]; returns [n, 1].
template <class T>
Var<T> predict(Var<T> mf, Var<T> configs, const ModelSpec& spec) {
  const Tensor<T>& cv = configs.value();
  if (cv.rank() != 2 || cv.cols() != spec.config_width) {
    throw UsageError("config encoding width " + std::to_string(cv.cols()) + " does not match the model's " +
                     std::to_string(spec.config_width));
  }
  if (mf.value().size() != spec.mf_width()) throw UsageError("metafeature width does not match the model");
  Var<T> x = nd::concat_cols(nd::repeat_rows(mf, cv.rows()), configs);
  return nd::forward_dense_stack(x, sur_layers(spec));
}

template <class T>
Tensor<T> config_matrix(const std::vector<const std::vector<float>*>& encoded, std::size_t width) {
  Tensor<T> m({encoded.size(), width});
  for (std::size_t r = 0; r < encoded.size(); ++r) {
    if (encoded[r]->size() != width) throw UsageError("config encoding has the wrong width");
    for (std::size_t c = 0; c < width; ++c) m.at(r, c) = static_cast<T>((*encoded[r])[c]);
  }
  return m;
}

template <class T>
Tensor<T> config_matrix(const std::vector<Config>& grid, std::size_t width) {
  std::vector<const std::vector<float>*> rows;
  for (const auto& c : grid) rows.push_back(&c.encoded);
  return config_matrix<T>(rows, width);
}

/// Single prediction from a precomputed metafeature vector.
template <class T>
double predict(const std::vector<float>& encoded, const std::vector<double>& mf, const ParamSet<T>& params,
               const ModelSpec& spec) {
  ParamSet<T> ps = params;
  Tape<T> tape(&ps, false);
  Var<T> m = tape.constant(Tensor<T>::row(std::vector<T>(mf.begin(), mf.end())));
  Var<T> c = tape.constant(config_matrix<T>({&encoded}, encoded.size()));
  return static_cast<double>(predict(m, c, spec).item());
}

/// Predictions for every grid config from precomputed metafeatures.
template <class T>
std::vector<double> predict_grid(const std::vector<double>& mf, const std::vector<Config>& grid,
                                 const ParamSet<T>& params, const ModelSpec& spec) {
  if (grid.empty()) return {};
  ParamSet<T> ps = params;
  Tape<T> tape(&ps, false);
  Var<T> m = tape.constant(Tensor<T>::row(std::vector<T>(mf.begin(), mf.end())));
  Var<T> c = tape.constant(config_matrix<T>(grid, spec.config_width));
  const Tensor<T>& out = predict(m, c, spec).value();
  return {out.data.begin(), out.data.end()};
}

/// Predictions for every grid config on dataset `d`; phi(D) is computed once.
/// Learned metafeatures are taken from the train view of `d`.
template <class T>
std::vector<double> predict_grid(const Dataset& d, const std::vector<Config>& grid, const ParamSet<T>& params,
                                 const ModelSpec& spec) {
  if (grid.empty()) return {};
  ParamSet<T> ps = params;
  Tape<T> tape(&ps, false);
  Var<T> m = phi(tape, train_view(d), spec);
  Var<T> c = tape.constant(config_matrix<T>(grid, spec.config_width));
  const Tensor<T>& out = predict(m, c, spec).value();
  return {out.data.begin(), out.data.end()};
}

template <class T>
std::vector<double> dataset_metafeatures(const Dataset& d, const ParamSet<T>& params, const ModelSpec& spec) {
  ParamSet<T> ps = params;
  Tape<T> tape(&ps, false);
  const Tensor<T>& v = phi(tape, train_view(d), spec).value();
  return {v.data.begin(), v.data.end()};
}

}  // namespace dmfbs::surrogate
