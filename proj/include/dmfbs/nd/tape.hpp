#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <limits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dmfbs/errors.hpp"
#include "dmfbs/nd/tensor.hpp"

namespace dmfbs::nd {

template <class T>
class Tape;

/// Handle to one recorded value on a Tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape; }
  T item() const { return value().item(); }
};

/// Records a forward computation over dense tensors and replays it backwards.
///
/// The tape owns every intermediate. A Tape is single-use per forward pass:
/// build the graph, call backward() on a scalar, read the gradients. Parameter
/// leaves read from the bound ParamSet; in training mode batch-norm layers
/// update their running statistics in that same ParamSet.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    std::string param;
    bool needs_grad = false;
  };

  explicit Tape(ParamSet<T>* params = nullptr, bool training = false, std::uint64_t seed = 0)
      : params_(params), training_(training), rng_(seed) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool training() const { return training_; }
  std::mt19937_64& rng() { return rng_; }
  bool has_params() const { return params_ != nullptr; }
  ParamSet<T>& params() {
    if (!params_) throw UsageError("tape has no bound parameter set");
    return *params_;
  }

  std::size_t size() const { return nodes_.size(); }
  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

  /// Leaf whose gradient can be read back with grad_of() after backward().
  Var<T> variable(Tensor<T> v) { return push(std::move(v), true, nullptr); }

  /// Leaf bound to a named parameter. Repeated calls return the same node.
  Var<T> param(const std::string& name) {
    if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var<T>{this, it->second};
    auto& ps = params();
    auto it = ps.find(name);
    if (it == ps.end()) throw UsageError("unknown parameter '" + name + "'");
    Var<T> v = push(it->second, !is_buffer(name), nullptr);
    nodes_[v.id].param = name;
    param_nodes_.emplace(name, v.id);
    return v;
  }

  Var<T> push(Tensor<T> value, bool needs_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), {}, needs_grad});
    return Var<T>{this, nodes_.size() - 1};
  }

  /// Gradient accumulator for node `id`, zero-initialized on first touch.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  const Tensor<T>& grad_of(Var<T> v) {
    if (v.tape != this) throw UsageError("variable belongs to a different tape");
    return grad(v.id);
  }

  /// Reverse sweep from a scalar. Returns a gradient for every array in the
  /// bound ParamSet (zeros for arrays the loss does not touch).
  ParamSet<T> backward(Var<T> loss) {
    if (nodes_.empty() || loss.tape != this || loss.id >= nodes_.size()) {
      throw UsageError("backward() called without a recorded forward pass for this loss");
    }
    if (nodes_[loss.id].value.size() != 1) {
      throw UsageError("backward() needs a scalar loss, got shape " + shape_str(nodes_[loss.id].value.shape));
    }
    for (auto& n : nodes_) n.grad = Tensor<T>();
    grad(loss.id).data[0] = T{1};
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.data.empty() || !n.backward) continue;
      n.backward(*this, id);
    }
    ParamSet<T> out;
    if (params_) {
      out = zeros_like(*params_);
      for (const auto& [name, id] : param_nodes_) {
        if (!nodes_[id].grad.data.empty()) out[name] = nodes_[id].grad;
      }
    }
    return out;
  }

 private:
  ParamSet<T>* params_;
  bool training_;
  std::mt19937_64 rng_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_nodes_;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<RowMat<T>> mat(Tensor<T>& t) {
  return Eigen::Map<RowMat<T>>(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                               static_cast<Eigen::Index>(t.cols()));
}

template <class T>
Eigen::Map<const RowMat<T>> mat(const Tensor<T>& t) {
  return Eigen::Map<const RowMat<T>>(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                                     static_cast<Eigen::Index>(t.cols()));
}

template <class T>
void require_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw UsageError("operands recorded on different tapes");
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape != b.shape) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
}

template <class T>
void require_matrix(const Tensor<T>& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 input, got " + shape_str(a.shape));
}

/// Elementwise map with derivative dy/dx expressed through (x, y).
template <class T, class F, class DF>
Var<T> unary(Var<T> x, F f, DF df) {
  Tape<T>& tape = *x.tape;
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  const std::size_t xi = x.id;
  return tape.push(std::move(y), tape.needs_grad(xi), [xi, df](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& xv = tp.value(xi);
    const Tensor<T>& yv = tp.value(self);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// x[n,k] * w[k,m]
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require_matrix(av, "matmul");
  detail::require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_str(av.shape) + " x " + shape_str(bv.shape));
  }
  Tensor<T> y({av.rows(), bv.cols()});
  detail::mat(y).noalias() = detail::mat(av) * detail::mat(bv);
  Tape<T>& tape = *a.tape;
  const std::size_t ai = a.id, bi = b.id;
  return tape.push(std::move(y), tape.needs_grad(ai) || tape.needs_grad(bi), [ai, bi](Tape<T>& tp, std::size_t self) {
    auto g = detail::mat(std::as_const(tp.grad(self)));
    if (tp.needs_grad(ai)) detail::mat(tp.grad(ai)).noalias() += g * detail::mat(tp.value(bi)).transpose();
    if (tp.needs_grad(bi)) detail::mat(tp.grad(bi)).noalias() += detail::mat(tp.value(ai)).transpose() * g;
  });
}

/// x[n,k] * w[k,m] + b[m] (bias broadcast over rows).
template <class T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  detail::require_same_tape(x, w);
  detail::require_same_tape(x, b);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  detail::require_matrix(xv, "affine");
  detail::require_matrix(wv, "affine");
  if (xv.cols() != wv.rows()) {
    throw DimensionError("dense layer expects input width " + std::to_string(wv.rows()) + ", got " +
                         std::to_string(xv.cols()));
  }
  if (bv.size() != wv.cols()) throw DimensionError("affine: bias length does not match output width");
  const std::size_t n = xv.rows(), m = wv.cols();
  Tensor<T> y({n, m});
  auto ym = detail::mat(y);
  ym.noalias() = detail::mat(xv) * detail::mat(wv);
  for (std::size_t r = 0; r < n; ++r) {
    T* row = y.data.data() + r * m;
    for (std::size_t c = 0; c < m; ++c) row[c] += bv[c];
  }
  Tape<T>& tape = *x.tape;
  const std::size_t xi = x.id, wi = w.id, bi = b.id;
  const bool ng = tape.needs_grad(xi) || tape.needs_grad(wi) || tape.needs_grad(bi);
  return tape.push(std::move(y), ng, [xi, wi, bi](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& gt = tp.grad(self);
    auto g = detail::mat(gt);
    if (tp.needs_grad(xi)) detail::mat(tp.grad(xi)).noalias() += g * detail::mat(tp.value(wi)).transpose();
    if (tp.needs_grad(wi)) detail::mat(tp.grad(wi)).noalias() += detail::mat(tp.value(xi)).transpose() * g;
    if (tp.needs_grad(bi)) {
      Tensor<T>& gb = tp.grad(bi);
      const std::size_t rows = gt.rows(), cols = gt.cols();
      std::vector<double> acc(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* row = gt.data.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc[c] += static_cast<double>(row[c]);
      }
      for (std::size_t c = 0; c < cols; ++c) gb[c] += static_cast<T>(acc[c]);
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  Tape<T>& tape = *a.tape;
  const std::size_t ai = a.id, bi = b.id;
  return tape.push(std::move(y), tape.needs_grad(ai) || tape.needs_grad(bi), [ai, bi](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad(self);
    for (std::size_t id : {ai, bi}) {
      if (!tp.needs_grad(id)) continue;
      Tensor<T>& gx = tp.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  Tape<T>& tape = *a.tape;
  const std::size_t ai = a.id, bi = b.id;
  return tape.push(std::move(y), tape.needs_grad(ai) || tape.needs_grad(bi), [ai, bi](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad(self);
    if (tp.needs_grad(ai)) {
      Tensor<T>& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor<T>& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  Tape<T>& tape = *a.tape;
  const std::size_t ai = a.id, bi = b.id;
  return tape.push(std::move(y), tape.needs_grad(ai) || tape.needs_grad(bi), [ai, bi](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad(self);
    const Tensor<T>& av = tp.value(ai);
    const Tensor<T>& bv = tp.value(bi);
    if (tp.needs_grad(ai)) {
      Tensor<T>& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor<T>& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> x, T s) {
  return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(Var<T> x, T s) {
  return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T{1}; });
}

template <class T>
Var<T> square(Var<T> x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <class T>
Var<T> exp(Var<T> x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(Var<T> x) {
  return detail::unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

/// Pass-through gradient inside [lo, hi], zero outside.
template <class T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  return detail::unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v < lo || v > hi) ? T{0} : T{1}; });
}

template <class T>
Var<T> relu(Var<T> x) {
  return detail::unary(x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

inline constexpr double kLeakySlope = 0.01;

template <class T>
Var<T> leaky_relu(Var<T> x) {
  const T a = static_cast<T>(kLeakySlope);
  return detail::unary(x, [a](T v) { return v > T{0} ? v : a * v; }, [a](T v, T) { return v > T{0} ? T{1} : a; });
}

inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kSeluScale = 1.0507009873554804934193349852946;

template <class T>
Var<T> selu(Var<T> x) {
  const T alpha = static_cast<T>(kSeluAlpha), lambda = static_cast<T>(kSeluScale);
  return detail::unary(
      x, [=](T v) { return v > T{0} ? lambda * v : lambda * alpha * (std::exp(v) - T{1}); },
      [=](T v, T y) { return v > T{0} ? lambda : y + lambda * alpha; });
}

// ---------------------------------------------------------------------------
// Reductions (64-bit accumulators)

template <class T>
Var<T> sum(Var<T> x) {
  const Tensor<T>& xv = x.value();
  double acc = 0.0;
  for (T v : xv.data) acc += static_cast<double>(v);
  Tape<T>& tape = *x.tape;
  const std::size_t xi = x.id;
  return tape.push(Tensor<T>::scalar(static_cast<T>(acc)), tape.needs_grad(xi), [xi](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad(self)[0];
    for (auto& v : tp.grad(xi).data) v += g;
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  const auto n = static_cast<T>(x.value().size());
  return scale(sum(x), T{1} / n);
}

/// Mean over consecutive blocks of `group` rows: [n*group, m] -> [n, m].
template <class T>
Var<T> group_mean_rows(Var<T> x, std::size_t group) {
  const Tensor<T>& xv = x.value();
  detail::require_matrix(xv, "group_mean_rows");
  if (group == 0 || xv.rows() % group != 0) {
    throw DimensionError("group_mean_rows: " + std::to_string(xv.rows()) + " rows not divisible into groups of " +
                         std::to_string(group));
  }
  const std::size_t groups = xv.rows() / group, m = xv.cols();
  Tensor<T> y({groups, m});
  std::vector<double> acc(m);
  for (std::size_t g = 0; g < groups; ++g) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t r = g * group; r < (g + 1) * group; ++r) {
      const T* row = xv.data.data() + r * m;
      for (std::size_t c = 0; c < m; ++c) acc[c] += static_cast<double>(row[c]);
    }
    for (std::size_t c = 0; c < m; ++c) y.at(g, c) = static_cast<T>(acc[c] / static_cast<double>(group));
  }
  Tape<T>& tape = *x.tape;
  const std::size_t xi = x.id;
  return tape.push(std::move(y), tape.needs_grad(xi), [xi, group, m](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad(xi);
    const T inv = T{1} / static_cast<T>(group);
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      const T* grow = g.data.data() + (r / group) * m;
      T* out = gx.data.data() + r * m;
      for (std::size_t c = 0; c < m; ++c) out[c] += grow[c] * inv;
    }
  });
}

template <class T>
Var<T> mean_rows(Var<T> x) {
  return group_mean_rows(x, x.value().rows());
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require_matrix(av, "concat_cols");
  detail::require_matrix(bv, "concat_cols");
  if (av.rows() != bv.rows()) throw DimensionError("concat_cols: row counts differ");
  const std::size_t n = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor<T> y({n, ca + cb});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data.data() + r * ca, ca, y.data.data() + r * (ca + cb));
    std::copy_n(bv.data.data() + r * cb, cb, y.data.data() + r * (ca + cb) + ca);
  }
  Tape<T>& tape = *a.tape;
  const std::size_t ai = a.id, bi = b.id;
  return tape.push(std::move(y), tape.needs_grad(ai) || tape.needs_grad(bi),
                   [ai, bi, n, ca, cb](Tape<T>& tp, std::size_t self) {
                     const Tensor<T>& g = tp.grad(self);
                     if (tp.needs_grad(ai)) {
                       Tensor<T>& ga = tp.grad(ai);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < ca; ++c) ga.at(r, c) += g.data[r * (ca + cb) + c];
                     }
                     if (tp.needs_grad(bi)) {
                       Tensor<T>& gb = tp.grad(bi);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < cb; ++c) gb.at(r, c) += g.data[r * (ca + cb) + ca + c];
                     }
                   });
}

/// [1, k] -> [n, k]
template <class T>
Var<T> repeat_rows(Var<T> x, std::size_t n) {
  const Tensor<T>& xv = x.value();
  if (xv.rows() != 1) throw DimensionError("repeat_rows expects a single row, got " + shape_str(xv.shape));
  const std::size_t k = xv.cols();
  Tensor<T> y({n, k});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(xv.data.data(), k, y.data.data() + r * k);
  Tape<T>& tape = *x.tape;
  const std::size_t xi = x.id;
  return tape.push(std::move(y), tape.needs_grad(xi), [xi, n, k](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t c = 0; c < k; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += static_cast<double>(g.data[r * k + c]);
      gx[c] += static_cast<T>(acc);
    }
  });
}

/// Flat element `i` as a scalar.
template <class T>
Var<T> element(Var<T> x, std::size_t i) {
  const Tensor<T>& xv = x.value();
  if (i >= xv.size()) throw DimensionError("element index out of range");
  Tape<T>& tape = *x.tape;
  const std::size_t xi = x.id;
  return tape.push(Tensor<T>::scalar(xv[i]), tape.needs_grad(xi),
                   [xi, i](Tape<T>& tp, std::size_t self) { tp.grad(xi)[i] += tp.grad(self)[0]; });
}

// ---------------------------------------------------------------------------
// Composite ops

/// Euclidean distance between two equally shaped tensors. The subgradient at
/// a == b is taken as zero.
template <class T>
Var<T> l2_distance(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "l2_distance");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  const double dist = std::sqrt(acc);
  Tape<T>& tape = *a.tape;
  const std::size_t ai = a.id, bi = b.id;
  return tape.push(Tensor<T>::scalar(static_cast<T>(dist)), tape.needs_grad(ai) || tape.needs_grad(bi),
                   [ai, bi, dist](Tape<T>& tp, std::size_t self) {
                     if (dist == 0.0) return;
                     const double g = static_cast<double>(tp.grad(self)[0]) / dist;
                     const Tensor<T>& av = tp.value(ai);
                     const Tensor<T>& bv = tp.value(bi);
                     const bool ga = tp.needs_grad(ai), gb = tp.needs_grad(bi);
                     for (std::size_t i = 0; i < av.size(); ++i) {
                       const T d = static_cast<T>(g * (static_cast<double>(av[i]) - static_cast<double>(bv[i])));
                       if (ga) tp.grad(ai)[i] += d;
                       if (gb) tp.grad(bi)[i] -= d;
                     }
                   });
}

/// Inverted dropout: kept units are scaled by 1/(1-p). Identity outside training mode.
template <class T>
Var<T> dropout(Var<T> x, double p) {
  Tape<T>& tape = *x.tape;
  if (!tape.training() || p <= 0.0) return x;
  if (p >= 1.0) throw UsageError("dropout rate must be < 1");
  const Tensor<T>& xv = x.value();
  std::bernoulli_distribution keep(1.0 - p);
  const T s = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(xv.size());
  for (auto& m : mask) m = keep(tape.rng()) ? s : T{0};
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  const std::size_t xi = x.id;
  return tape.push(std::move(y), tape.needs_grad(xi), [xi, mask = std::move(mask)](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kBatchNormEps = 1e-5;

/// Batch normalization over rows. Training mode normalizes with batch
/// statistics and updates the running buffers `<name>.running_mean/var`;
/// inference mode uses the running buffers only.
template <class T>
Var<T> batch_norm(Var<T> x, const std::string& name) {
  Tape<T>& tape = *x.tape;
  Var<T> gamma = tape.param(name + ".gamma");
  Var<T> beta = tape.param(name + ".beta");
  auto& ps = tape.params();
  Tensor<T>& run_mean = ps.at(name + ".running_mean");
  Tensor<T>& run_var = ps.at(name + ".running_var");
  const Tensor<T>& xv = x.value();
  detail::require_matrix(xv, "batch_norm");
  const std::size_t n = xv.rows(), m = xv.cols();
  if (run_mean.size() != m) throw DimensionError("batch_norm: width mismatch for " + name);

  std::vector<double> mu(m, 0.0), var(m, 0.0);
  if (tape.training()) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) mu[c] += static_cast<double>(xv.at(r, c));
    for (auto& v : mu) v /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) {
        const double d = static_cast<double>(xv.at(r, c)) - mu[c];
        var[c] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(n);
    for (std::size_t c = 0; c < m; ++c) {
      run_mean[c] = static_cast<T>(kBatchNormMomentum * run_mean[c] + (1.0 - kBatchNormMomentum) * mu[c]);
      run_var[c] = static_cast<T>(kBatchNormMomentum * run_var[c] + (1.0 - kBatchNormMomentum) * var[c]);
    }
  } else {
    for (std::size_t c = 0; c < m; ++c) {
      mu[c] = run_mean[c];
      var[c] = run_var[c];
    }
  }
  std::vector<double> inv_std(m);
  for (std::size_t c = 0; c < m; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + kBatchNormEps);

  Tensor<T> xhat(xv.shape);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c)
      xhat.at(r, c) = static_cast<T>((static_cast<double>(xv.at(r, c)) - mu[c]) * inv_std[c]);
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  Tensor<T> y(xv.shape);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) y.at(r, c) = gv[c] * xhat.at(r, c) + bv[c];

  const std::size_t xi = x.id, gi = gamma.id, bi = beta.id;
  const bool training = tape.training();
  return tape.push(std::move(y), true,
                   [xi, gi, bi, n, m, training, xhat = std::move(xhat), inv_std](Tape<T>& tp, std::size_t self) {
                     const Tensor<T>& g = tp.grad(self);
                     const Tensor<T>& gv = tp.value(gi);
                     std::vector<double> sum_g(m, 0.0), sum_gx(m, 0.0);
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t c = 0; c < m; ++c) {
                         sum_g[c] += static_cast<double>(g.at(r, c));
                         sum_gx[c] += static_cast<double>(g.at(r, c)) * static_cast<double>(xhat.at(r, c));
                       }
                     if (tp.needs_grad(gi))
                       for (std::size_t c = 0; c < m; ++c) tp.grad(gi)[c] += static_cast<T>(sum_gx[c]);
                     if (tp.needs_grad(bi))
                       for (std::size_t c = 0; c < m; ++c) tp.grad(bi)[c] += static_cast<T>(sum_g[c]);
                     if (!tp.needs_grad(xi)) return;
                     Tensor<T>& gx = tp.grad(xi);
                     const double nn = static_cast<double>(n);
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t c = 0; c < m; ++c) {
                         const double gxhat = static_cast<double>(g.at(r, c)) * static_cast<double>(gv[c]);
                         double d;
                         if (training) {
                           d = inv_std[c] / nn *
                               (nn * gxhat - static_cast<double>(gv[c]) * sum_g[c] -
                                static_cast<double>(xhat.at(r, c)) * static_cast<double>(gv[c]) * sum_gx[c]);
                         } else {
                           d = gxhat * inv_std[c];
                         }
                         gx.at(r, c) += static_cast<T>(d);
                       }
                   });
}

/// Mean categorical cross-entropy of row-wise softmax(logits) against integer labels.
template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const Tensor<T>& lv = logits.value();
  detail::require_matrix(lv, "softmax_cross_entropy");
  const std::size_t n = lv.rows(), k = lv.cols();
  if (labels.size() != n) throw DimensionError("softmax_cross_entropy: label count does not match rows");
  Tensor<T> probs(lv.shape);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw UsageError("label out of range for logits width");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(lv.at(r, c)));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(lv.at(r, c)) - mx);
    for (std::size_t c = 0; c < k; ++c) probs.at(r, c) = static_cast<T>(std::exp(static_cast<double>(lv.at(r, c)) - mx) / z);
    total += -(static_cast<double>(lv.at(r, static_cast<std::size_t>(y))) - mx - std::log(z));
  }
  std::vector<int> ys(labels.begin(), labels.end());
  Tape<T>& tape = *logits.tape;
  const std::size_t li = logits.id;
  return tape.push(Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n))), tape.needs_grad(li),
                   [li, n, k, probs = std::move(probs), ys = std::move(ys)](Tape<T>& tp, std::size_t self) {
                     const T g = tp.grad(self)[0] / static_cast<T>(n);
                     Tensor<T>& gl = tp.grad(li);
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t c = 0; c < k; ++c) {
                         const T target = static_cast<std::size_t>(ys[r]) == c ? T{1} : T{0};
                         gl.at(r, c) += g * (probs.at(r, c) - target);
                       }
                   });
}

}  // namespace dmfbs::nd
