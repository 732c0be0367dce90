#pragma once

#include <map>
#include <utility>
#include <vector>

#include "dmfbs/d2v/extractor.hpp"
#include "dmfbs/errors.hpp"
#include "dmfbs/nd/tape.hpp"

namespace dmfbs::objective {

using nd::Tape;
using nd::Tensor;
using nd::Var;

/// Loss weights and step settings shared by meta-training and fine-tuning.
struct TrainConfig {
  double alpha_mr = 10.0;
  double alpha_dbi = 0.1;
  double lr = 0.01;
  std::size_t batch_size = 16;
  double sim_eps = 1e-7;
  /// Normalized losses in [0, 100] are multiplied by this before regression.
  double target_scale = 0.01;
};

template <class T>
Var<T> zero_scalar(Tape<T>& tape) {
  return tape.constant(Tensor<T>::scalar(T{0}));
}

/// sum (l - lhat)^2 over matching entries of `pred` and `target`.
template <class T>
Var<T> loss_sur(Var<T> pred, const Tensor<T>& target) {
  if (pred.value().size() != target.size()) throw DimensionError("loss_sur: prediction/target count mismatch");
  Tensor<T> t = target;
  t.shape = pred.value().shape;
  return nd::sum(nd::square(nd::sub(pred, pred.tape->constant(std::move(t)))));
}

/// One scalar prediction tagged with its config and the dataset it was made for.
template <class T>
struct MRItem {
  Var<T> pred;
  int config_id = 0;
  std::size_t group = 0;
};

/// sum over unordered pairs with equal configs of s(D_a, D_b) * (lhat_a - lhat_b)^2,
/// where s = exp(-||phi_a - phi_b||) and `group_mf[g]` is phi of group g.
/// Pairs inside one group with the same config predict identically and are skipped.
template <class T>
Var<T> loss_mr(Tape<T>& tape, const std::vector<MRItem<T>>& items, const std::vector<Var<T>>& group_mf) {
  std::map<std::pair<std::size_t, std::size_t>, Var<T>> sims;
  auto sim = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    auto it = sims.find({a, b});
    if (it != sims.end()) return it->second;
    Var<T> s = d2v::similarity(group_mf.at(a), group_mf.at(b));
    sims.emplace(std::make_pair(a, b), s);
    return s;
  };
  Var<T> total = zero_scalar(tape);
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      if (items[i].config_id != items[j].config_id || items[i].group == items[j].group) continue;
      Var<T> diff = nd::square(nd::sub(items[i].pred, items[j].pred));
      total = nd::add(total, nd::mul(sim(items[i].group, items[j].group), diff));
    }
  return total;
}

/// -sum [s log shat + (1 - s) log(1 - shat)] with shat clamped to [eps, 1 - eps].
template <class T>
Var<T> loss_dbi_from_similarity(Tape<T>& tape, const std::vector<std::pair<Var<T>, int>>& examples, double eps) {
  if (examples.empty()) throw UsageError("loss_dbi needs at least one example");
  Var<T> total = zero_scalar(tape);
  for (const auto& [s_hat, label] : examples) {
    Var<T> p = nd::clamp(s_hat, static_cast<T>(eps), static_cast<T>(1.0 - eps));
    Var<T> ll = label == 1 ? nd::log(p) : nd::log(nd::add_scalar(nd::scale(p, T{-1}), T{1}));
    total = nd::sub(total, ll);
  }
  return total;
}

/// Batch-pair examples given as metafeature nodes (phi(D'), phi(D''), s).
template <class T>
struct DBIExample {
  Var<T> a;
  Var<T> b;
  int same = 0;
};

template <class T>
Var<T> loss_dbi(Tape<T>& tape, const std::vector<DBIExample<T>>& examples, double eps) {
  std::vector<std::pair<Var<T>, int>> sims;
  for (const auto& e : examples) sims.emplace_back(d2v::similarity(e.a, e.b), e.same);
  return loss_dbi_from_similarity(tape, sims, eps);
}

/// f_SUR + alpha_MR f_MR + alpha_DBI f_DBI.
template <class T>
Var<T> combined_loss(Var<T> sur, Var<T> mr, Var<T> dbi, const TrainConfig& cfg) {
  return nd::add(nd::add(sur, nd::scale(mr, static_cast<T>(cfg.alpha_mr))), nd::scale(dbi, static_cast<T>(cfg.alpha_dbi)));
}

}  // namespace dmfbs::objective
