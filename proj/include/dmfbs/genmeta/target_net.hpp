#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dmfbs/errors.hpp"
#include "dmfbs/metadata/dataset.hpp"
#include "dmfbs/metadata/space.hpp"
#include "dmfbs/nd/layers.hpp"
#include "dmfbs/nd/optim.hpp"

namespace dmfbs::genmeta {

struct TargetNetSpec {
  int epochs = 50;
  double lr = 0.001;
  std::size_t batch_size = 32;
};

struct TargetNetResult {
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  bool diverged = false;
};

/// Hidden layers from expand_layout plus a linear C-way head.
/// The head starts at zero, so an untrained net predicts the uniform distribution.
inline std::vector<nd::LayerSpec> target_net_layers(const RawConfig& raw, std::size_t inputs, int classes) {
  std::vector<nd::LayerSpec> layers;
  std::size_t in = inputs;
  const auto widths = raw.widths();
  for (std::size_t i = 0; i < widths.size(); ++i) {
    nd::DenseSpec d{"net.l" + std::to_string(i), in, static_cast<std::size_t>(widths[i]), raw.activation};
    d.dropout = raw.dropout;
    d.batch_norm = raw.normalization;
    layers.push_back(d);
    in = d.out;
  }
  nd::DenseSpec head{"net.head", in, static_cast<std::size_t>(classes), nd::Activation::None};
  head.zero_init = true;
  layers.push_back(head);
  return layers;
}

inline nd::OptimizerState target_optimizer(OptimizerKind kind, double lr) {
  switch (kind) {
    case OptimizerKind::GD: return nd::OptimizerState::gd(lr);
    case OptimizerKind::RMSProp: return nd::OptimizerState::rmsprop(lr);
    case OptimizerKind::Adam: break;
  }
  return nd::OptimizerState::adam(lr, 0.9);
}

namespace detail {

inline nd::Tensor<float> rows_matrix(const Dataset& d, const std::vector<std::size_t>& rows) {
  nd::Tensor<float> x({rows.size(), d.features});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t f = 0; f < d.features; ++f) x.at(r, f) = d.at(rows[r], f);
  return x;
}

inline std::vector<int> rows_labels(const Dataset& d, const std::vector<std::size_t>& rows) {
  std::vector<int> y;
  for (std::size_t r : rows) y.push_back(d.y[r]);
  return y;
}

}  // namespace detail

/// Trains one target network and returns its final-epoch validation
/// cross-entropy. A non-finite training loss stops training; the result is
/// then the worst finite validation loss seen (ln C if none) with `diverged` set.
inline TargetNetResult train_target_net(const Dataset& d, const RawConfig& raw, const TargetNetSpec& spec,
                                        std::uint64_t seed) {
  const auto train = d.rows_in(Split::Train);
  const auto valid = d.rows_in(Split::Valid);
  if (train.empty() || valid.empty()) throw UsageError("dataset '" + d.id + "' needs train and valid rows");
  std::mt19937_64 rng(seed);
  const auto layers = target_net_layers(raw, d.features, d.num_classes);
  nd::ParamSet<float> params;
  nd::init_stack(params, layers, rng);
  auto opt = target_optimizer(raw.optimizer, spec.lr);

  const nd::Tensor<float> xv = detail::rows_matrix(d, valid);
  const std::vector<int> yv = detail::rows_labels(d, valid);
  auto evaluate = [&](TargetNetResult& r) {
    nd::Tape<float> tape(&params, false);
    nd::Var<float> logits = nd::forward_dense_stack(tape.constant(xv), layers);
    r.val_loss = nd::softmax_cross_entropy(logits, std::span<const int>(yv)).item();
    const auto& lv = logits.value();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < yv.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < lv.cols(); ++c)
        if (lv.at(i, c) > lv.at(i, best)) best = c;
      correct += static_cast<int>(best) == yv[i];
    }
    r.val_accuracy = static_cast<double>(correct) / static_cast<double>(yv.size());
  };

  TargetNetResult result;
  double worst = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = train;
  for (int epoch = 0; epoch < spec.epochs && !result.diverged; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();) {
      // Batch norm needs two rows for a batch variance; a trailing single row joins the previous batch.
      std::size_t end = std::min(order.size(), start + spec.batch_size);
      if (order.size() - end == 1) end = order.size();
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto yb = detail::rows_labels(d, rows);
      nd::ParamSet<float> grads;
      {
        nd::Tape<float> tape(&params, true, rng());
        nd::Var<float> logits = nd::forward_dense_stack(tape.constant(detail::rows_matrix(d, rows)), layers);
        nd::Var<float> loss = nd::softmax_cross_entropy(logits, std::span<const int>(yb));
        if (!std::isfinite(loss.item())) {
          result.diverged = true;
          break;
        }
        grads = tape.backward(loss);
      }
      nd::optimizer_step(opt, params, grads);
      start = end;
    }
    if (result.diverged) break;
    TargetNetResult r;
    evaluate(r);
    if (!std::isfinite(r.val_loss)) {
      result.diverged = true;
      break;
    }
    worst = std::max(worst, r.val_loss);
    result.val_loss = r.val_loss;
    result.val_accuracy = r.val_accuracy;
  }
  if (spec.epochs <= 0) evaluate(result);
  if (result.diverged) result.val_loss = std::isfinite(worst) ? worst : std::log(static_cast<double>(d.num_classes));
  return result;
}

}  // namespace dmfbs::genmeta
