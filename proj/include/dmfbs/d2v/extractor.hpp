#pragma once

#include <cmath>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "dmfbs/errors.hpp"
#include "dmfbs/metadata/dataset.hpp"
#include "dmfbs/nd/layers.hpp"

namespace dmfbs::d2v {

using nd::DenseSpec;
using nd::LayerSpec;
using nd::ParamSet;
using nd::ResidualSpec;
using nd::Tape;
using nd::Tensor;
using nd::Var;

/// Shape of the deep-set extractor. e1 and e3 are
/// Dense(width) -> blocks x ResidualBlock(block_depth x Dense(width)) -> Dense(out);
/// e2 is e2_depth x Dense(width).
struct MFEArch {
  std::size_t width = 32;
  std::size_t blocks = 8;
  std::size_t block_depth = 4;
  std::size_t e2_depth = 4;
  std::size_t k = 32;
  /// Init scale of the last layer inside each residual branch. Keeps the
  /// 8-block stacks from amplifying activations at initialization.
  double residual_gain = 0.1;
  /// Full datasets are strided down to this many rows before extraction.
  std::size_t max_rows = 256;
};

inline constexpr const char* kMfePrefix = "mfe.";

namespace detail {

inline std::vector<LayerSpec> residual_stage(const std::string& name, std::size_t in, std::size_t out,
                                             const MFEArch& a) {
  std::vector<LayerSpec> layers;
  layers.push_back(DenseSpec{name + ".in", in, a.width});
  for (std::size_t b = 0; b < a.blocks; ++b) {
    layers.push_back(ResidualSpec{name + ".res" + std::to_string(b), a.width, a.block_depth, nd::Activation::Relu,
                                  a.residual_gain});
  }
  layers.push_back(DenseSpec{name + ".out", a.width, out});
  return layers;
}

}  // namespace detail

inline std::vector<LayerSpec> e1_layers(const MFEArch& a) {
  return detail::residual_stage(std::string(kMfePrefix) + "e1", 2, a.width, a);
}

inline std::vector<LayerSpec> e2_layers(const MFEArch& a) {
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < a.e2_depth; ++i)
    layers.push_back(DenseSpec{std::string(kMfePrefix) + "e2.l" + std::to_string(i), a.width, a.width});
  return layers;
}

inline std::vector<LayerSpec> e3_layers(const MFEArch& a) {
  return detail::residual_stage(std::string(kMfePrefix) + "e3", a.width, a.k, a);
}

template <class T>
void init_mfe(ParamSet<T>& params, const MFEArch& a, std::mt19937_64& rng) {
  nd::init_stack(params, e1_layers(a), rng);
  nd::init_stack(params, e2_layers(a), rng);
  nd::init_stack(params, e3_layers(a), rng);
}

/// Every `stride`-th row so that at most `max_rows` remain. Keeps small datasets intact.
inline Dataset cap_rows(const Dataset& d, std::size_t max_rows) {
  if (max_rows == 0 || d.rows <= max_rows) return d;
  std::vector<std::size_t> rows(max_rows);
  for (std::size_t i = 0; i < max_rows; ++i) rows[i] = i * d.rows / max_rows;
  return subset(d, rows, all_features(d));
}

/// The [F*C*I, 2] pair matrix (x_{i,f}, [y_i == c]) in f-major, c, i order.
template <class T>
Tensor<T> pair_matrix(const Dataset& d) {
  const std::size_t I = d.rows, F = d.features, C = static_cast<std::size_t>(d.num_classes);
  Tensor<T> pairs({F * C * I, 2});
  std::size_t r = 0;
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < I; ++i, ++r) {
        const float x = d.at(i, f);
        if (!std::isfinite(x)) throw NumericError("dataset '" + d.id + "' contains a non-finite predictor");
        pairs.at(r, 0) = static_cast<T>(x);
        pairs.at(r, 1) = d.y[i] == static_cast<int>(c) ? T{1} : T{0};
      }
  return pairs;
}

/// phi(D) as a [1, K] node: e3(mean_fc e2(mean_i e1(x_if, y_ic))).
/// Rows beyond arch.max_rows are strided away first.
template <class T>
Var<T> extract(Tape<T>& tape, const Dataset& d, const MFEArch& a = {}) {
  if (d.rows < 1 || d.features < 1 || d.num_classes < 1) throw UsageError("extract needs a nonempty dataset");
  const Dataset& src = d.rows > a.max_rows && a.max_rows > 0 ? cap_rows(d, a.max_rows) : d;
  Var<T> h = tape.constant(pair_matrix<T>(src));
  h = nd::forward_dense_stack(h, e1_layers(a));
  h = nd::group_mean_rows(h, src.rows);
  h = nd::forward_dense_stack(h, e2_layers(a));
  h = nd::mean_rows(h);
  return nd::forward_dense_stack(h, e3_layers(a));
}

/// Inference-mode metafeatures as plain numbers.
template <class T>
std::vector<double> metafeatures(const Dataset& d, const ParamSet<T>& params, const MFEArch& a = {}) {
  ParamSet<T> ps = params;
  Tape<T> tape(&ps, false);
  const Tensor<T>& v = extract(tape, d, a).value();
  std::vector<double> out(v.data.begin(), v.data.end());
  for (double x : out)
    if (!std::isfinite(x)) throw NumericError("metafeatures of '" + d.id + "' are not finite");
  return out;
}

/// exp(-||a - b||) on recorded nodes.
template <class T>
Var<T> similarity(Var<T> a, Var<T> b) {
  if (a.value().size() != b.value().size()) throw UsageError("similarity: metafeature lengths differ");
  return nd::exp(nd::scale(nd::l2_distance(a, b), T{-1}));
}

inline double similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw UsageError("similarity: metafeature lengths differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-std::sqrt(acc));
}

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw UsageError("metafeature lengths differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

// CSV: dataset_id,k0,...,k{K-1}
inline void write_metafeatures_csv(std::ostream& out, const std::vector<std::string>& ids,
                                   const std::vector<std::vector<double>>& mf) {
  if (ids.size() != mf.size()) throw UsageError("one metafeature row per dataset id expected");
  const std::size_t k = mf.empty() ? 0 : mf.front().size();
  out << "dataset_id";
  for (std::size_t i = 0; i < k; ++i) out << ",k" << i;
  out << '\n';
  out.precision(9);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (mf[r].size() != k) throw UsageError("ragged metafeature rows");
    out << ids[r];
    for (double v : mf[r]) out << ',' << v;
    out << '\n';
  }
}

}  // namespace dmfbs::d2v
