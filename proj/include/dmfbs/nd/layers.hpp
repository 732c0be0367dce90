#pragma once

#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dmfbs/nd/tape.hpp"

namespace dmfbs::nd {

enum class Activation { None, Relu, LeakyRelu, Selu };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::None: return "linear";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leakyrelu";
    case Activation::Selu: return "selu";
  }
  return "?";
}

template <class T>
Var<T> activate(Var<T> x, Activation a) {
  switch (a) {
    case Activation::None: return x;
    case Activation::Relu: return relu(x);
    case Activation::LeakyRelu: return leaky_relu(x);
    case Activation::Selu: return selu(x);
  }
  return x;
}

/// Dense -> [batch norm] -> activation -> [dropout].
/// Parameters: `<name>.w` [in,out], `<name>.b` [out], and with batch norm
/// `<name>.bn.{gamma,beta,running_mean,running_var}`.
struct DenseSpec {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::Relu;
  double dropout = 0.0;
  bool batch_norm = false;
  double init_gain = 1.0;
  bool zero_init = false;
};

/// `depth` Dense(width) layers whose output is added to the block input.
/// Layer i is named `<name>.l<i>`.
struct ResidualSpec {
  std::string name;
  std::size_t width = 0;
  std::size_t depth = 0;
  Activation act = Activation::Relu;
  double last_layer_gain = 1.0;
};

using LayerSpec = std::variant<DenseSpec, ResidualSpec>;

inline std::size_t output_width(const LayerSpec& spec) {
  return std::visit(
      [](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, DenseSpec>) return s.out;
        else return s.width;
      },
      spec);
}

inline std::size_t input_width(const LayerSpec& spec) {
  return std::visit(
      [](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, DenseSpec>) return s.in;
        else return s.width;
      },
      spec);
}

namespace detail {

template <class T>
void init_dense(ParamSet<T>& params, const DenseSpec& d, std::mt19937_64& rng) {
  params[d.name + ".w"] = d.zero_init ? Tensor<T>({d.in, d.out}) : he_uniform<T>(d.in, d.out, rng, d.init_gain);
  params[d.name + ".b"] = Tensor<T>({d.out});
  if (d.batch_norm) {
    params[d.name + ".bn.gamma"] = Tensor<T>({d.out}, T{1});
    params[d.name + ".bn.beta"] = Tensor<T>({d.out});
    params[d.name + ".bn.running_mean"] = Tensor<T>({d.out});
    params[d.name + ".bn.running_var"] = Tensor<T>({d.out}, T{1});
  }
}

inline DenseSpec residual_layer(const ResidualSpec& r, std::size_t i) {
  DenseSpec d{r.name + ".l" + std::to_string(i), r.width, r.width, r.act};
  if (i + 1 == r.depth) d.init_gain = r.last_layer_gain;
  return d;
}

template <class T>
Var<T> forward_dense(Var<T> x, const DenseSpec& d) {
  Tape<T>& tape = *x.tape;
  Var<T> h = affine(x, tape.param(d.name + ".w"), tape.param(d.name + ".b"));
  if (d.batch_norm) h = batch_norm(h, d.name + ".bn");
  h = activate(h, d.act);
  return dropout(h, d.dropout);
}

}  // namespace detail

/// Adds freshly initialized parameters for every layer in `layers`.
template <class T>
void init_stack(ParamSet<T>& params, const std::vector<LayerSpec>& layers, std::mt19937_64& rng) {
  for (const auto& spec : layers) {
    if (const auto* d = std::get_if<DenseSpec>(&spec)) {
      detail::init_dense(params, *d, rng);
    } else {
      const auto& r = std::get<ResidualSpec>(spec);
      for (std::size_t i = 0; i < r.depth; ++i) detail::init_dense(params, detail::residual_layer(r, i), rng);
    }
  }
}

/// Runs `input` [batch, features] through the layer stack. Dropout and
/// batch-norm behaviour follow the tape's training flag.
template <class T>
Var<T> forward_dense_stack(Var<T> input, const std::vector<LayerSpec>& layers) {
  const Tensor<T>& x = input.value();
  if (x.rank() != 2) throw DimensionError("dense stack input must be rank 2, got " + shape_str(x.shape));
  if (!layers.empty() && x.cols() != input_width(layers.front())) {
    throw DimensionError("dense stack expects input width " + std::to_string(input_width(layers.front())) +
                         ", got " + std::to_string(x.cols()));
  }
  Var<T> h = input;
  for (const auto& spec : layers) {
    if (const auto* d = std::get_if<DenseSpec>(&spec)) {
      h = detail::forward_dense(h, *d);
    } else {
      const auto& r = std::get<ResidualSpec>(spec);
      Var<T> branch = h;
      for (std::size_t i = 0; i < r.depth; ++i) branch = detail::forward_dense(branch, detail::residual_layer(r, i));
      h = add(h, branch);
    }
  }
  return h;
}

/// Convenience wrapper: records `input` as a constant on a fresh tape bound to `params`.
template <class T>
Tensor<T> forward_dense_stack(const Tensor<T>& input, const std::vector<LayerSpec>& layers, ParamSet<T>& params,
                              bool training_mode, std::uint64_t seed = 0) {
  Tape<T> tape(&params, training_mode, seed);
  return forward_dense_stack(tape.constant(input), layers).value();
}

}  // namespace dmfbs::nd
