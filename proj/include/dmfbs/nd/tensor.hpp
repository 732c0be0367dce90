#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dmfbs/errors.hpp"

namespace dmfbs::nd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

/// Dense row-major tensor. Rank 1 and 2 are the only ranks the engine uses.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_size(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
  }

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }
  static Tensor row(std::vector<T> v) {
    const std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return rank() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  T item() const {
    if (data.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape));
    return data[0];
  }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

/// Named parameter arrays. std::map gives lexicographic iteration order for free.
template <class T>
using ParamSet = std::map<std::string, Tensor<T>>;

/// Batch-norm running statistics live in the ParamSet but are not trained.
inline bool is_buffer(const std::string& name) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".running_mean") || ends_with(".running_var");
}

template <class U, class T>
ParamSet<U> cast_params(const ParamSet<T>& params) {
  ParamSet<U> out;
  for (const auto& [name, t] : params) out.emplace(name, t.template cast<U>());
  return out;
}

template <class T>
std::size_t parameter_count(const ParamSet<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) {
    if (!is_buffer(name)) n += t.size();
  }
  return n;
}

template <class T>
ParamSet<T> zeros_like(const ParamSet<T>& params) {
  ParamSet<T> out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor<T>(t.shape));
  return out;
}

/// Params restricted to names starting with `prefix`.
template <class T>
ParamSet<T> with_prefix(const ParamSet<T>& params, const std::string& prefix) {
  ParamSet<T> out;
  for (auto it = params.lower_bound(prefix); it != params.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.emplace(it->first, it->second);
  }
  return out;
}

/// Uniform He-style fan-in initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <class T>
Tensor<T> he_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng, double gain = 1.0) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor<T> w({fan_in, fan_out});
  for (auto& v : w.data) v = static_cast<T>(dist(rng));
  return w;
}

}  // namespace dmfbs::nd
