#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "dmfbs/errors.hpp"
#include "dmfbs/nd/layers.hpp"
#include "dmfbs/nd/optim.hpp"

namespace dmfbs {

using nd::Activation;
using nd::OptimizerKind;

/// Network shape families. Names follow the usual glyphs:
/// square (constant), lhd (widening), rhd (narrowing), diamond (wide middle),
/// triangle (narrow middle).
enum class Layout { Square, Lhd, Rhd, Diamond, Triangle };

inline const char* to_string(Layout l) {
  switch (l) {
    case Layout::Square: return "square";
    case Layout::Lhd: return "lhd";
    case Layout::Rhd: return "rhd";
    case Layout::Diamond: return "diamond";
    case Layout::Triangle: return "triangle";
  }
  return "?";
}

inline Layout parse_layout(const std::string& s) {
  for (Layout l : {Layout::Square, Layout::Lhd, Layout::Rhd, Layout::Diamond, Layout::Triangle})
    if (s == to_string(l)) return l;
  throw UsageError("unknown layout '" + s + "'");
}

inline Activation parse_activation(const std::string& s) {
  for (Activation a : {Activation::Relu, Activation::LeakyRelu, Activation::Selu, Activation::None})
    if (s == nd::to_string(a)) return a;
  throw UsageError("unknown activation '" + s + "'");
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  for (OptimizerKind k : {OptimizerKind::Adam, OptimizerKind::RMSProp, OptimizerKind::GD})
    if (s == nd::to_string(k)) return k;
  throw UsageError("unknown optimizer '" + s + "'");
}

/// Layer widths for a layout, e.g. (lhd, 4, 5) -> [4, 8, 16, 32, 64].
inline std::vector<int> expand_layout(Layout layout, int neurons, int layers) {
  if (layers < 1 || neurons < 1) throw UsageError("expand_layout needs layers >= 1 and neurons >= 1");
  std::vector<int> widths(static_cast<std::size_t>(layers));
  const int last = layers - 1;
  const int center = last / 2;
  for (int k = 0; k < layers; ++k) {
    const int edge = std::min(k, last - k);
    int power = 0;
    switch (layout) {
      case Layout::Square: power = 0; break;
      case Layout::Lhd: power = k; break;
      case Layout::Rhd: power = last - k; break;
      case Layout::Diamond: power = edge; break;
      case Layout::Triangle: power = center - edge; break;
      default: throw UsageError("unknown layout");
    }
    widths[static_cast<std::size_t>(k)] = neurons << power;
  }
  return widths;
}

enum class SpaceName { Layout, Regularization, Optimization };

inline const char* to_string(SpaceName s) {
  switch (s) {
    case SpaceName::Layout: return "layout";
    case SpaceName::Regularization: return "regularization";
    case SpaceName::Optimization: return "optimization";
  }
  return "?";
}

inline SpaceName parse_space(const std::string& s) {
  for (SpaceName n : {SpaceName::Layout, SpaceName::Regularization, SpaceName::Optimization})
    if (s == to_string(n)) return n;
  throw UsageError("unknown search space '" + s + "' (expected layout, regularization or optimization)");
}

struct SearchSpace {
  SpaceName name = SpaceName::Layout;
  std::vector<Activation> activations;
  std::vector<int> neurons;
  std::vector<int> layers;
  std::vector<Layout> layouts;
  std::vector<double> dropouts;
  std::vector<bool> normalizations;
  std::vector<OptimizerKind> optimizers;

  static SearchSpace named(SpaceName n) {
    using A = Activation;
    using L = Layout;
    using O = OptimizerKind;
    switch (n) {
      case SpaceName::Layout:
        return {n, {A::Relu, A::Selu}, {4, 8, 16, 32}, {1, 3, 5, 7},
                {L::Square, L::Lhd, L::Rhd, L::Diamond, L::Triangle}, {0.0, 0.5}, {false}, {O::Adam}};
      case SpaceName::Regularization:
        return {n, {A::Relu, A::Selu, A::LeakyRelu}, {4, 8, 16, 32}, {1, 3, 5, 7},
                {L::Square}, {0.0, 0.2, 0.5}, {false, true}, {O::Adam}};
      case SpaceName::Optimization:
        return {n, {A::Relu, A::Selu, A::LeakyRelu}, {4, 8, 16}, {3, 5, 7},
                {L::Lhd, L::Rhd, L::Diamond, L::Triangle}, {0.0}, {false}, {O::Adam, O::RMSProp, O::GD}};
    }
    throw UsageError("unknown search space");
  }
};

struct RawConfig {
  Activation activation = Activation::Relu;
  int neurons = 4;
  int layers = 1;
  Layout layout = Layout::Square;
  double dropout = 0.0;
  bool normalization = false;
  OptimizerKind optimizer = OptimizerKind::Adam;

  std::vector<int> widths() const { return expand_layout(layout, neurons, layers); }
  bool operator==(const RawConfig&) const = default;
};

struct Config {
  int id = 0;
  RawConfig raw;
  std::vector<float> encoded;
};

/// One contiguous block of the encoded vector.
struct Segment {
  std::string name;
  bool one_hot = false;
  std::size_t offset = 0;
  std::size_t width = 0;
  std::vector<std::string> values;
};

namespace detail {

template <class V>
std::size_t index_of(const std::vector<V>& list, const V& v, const char* what) {
  auto it = std::find(list.begin(), list.end(), v);
  if (it == list.end()) throw UsageError(std::string(what) + " value is not in the search space");
  return static_cast<std::size_t>(it - list.begin());
}

template <class V, class F>
std::vector<std::string> names(const std::vector<V>& list, F f) {
  std::vector<std::string> out;
  for (const auto& v : list) out.push_back(f(v));
  return out;
}

}  // namespace detail

/// Segment layout in schema order (activation, neurons, layers, layout,
/// dropout, normalization, optimizer). Single-valued hyperparameters are dropped.
inline std::vector<Segment> encoding_schema(const SearchSpace& s) {
  std::vector<Segment> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, bool one_hot, std::vector<std::string> values) {
    if (values.size() < 2) return;
    const std::size_t width = one_hot ? values.size() : 1;
    out.push_back({std::move(name), one_hot, offset, width, std::move(values)});
    offset += width;
  };
  auto num = [](auto v) {
    std::ostringstream o;
    o << v;
    return o.str();
  };
  add("activation", true, detail::names(s.activations, [](Activation a) { return std::string(nd::to_string(a)); }));
  add("neurons", false, detail::names(s.neurons, num));
  add("layers", false, detail::names(s.layers, num));
  add("layout", true, detail::names(s.layouts, [](Layout l) { return std::string(to_string(l)); }));
  add("dropout", false, detail::names(s.dropouts, num));
  add("normalization", false,
      detail::names(s.normalizations, [](bool b) { return std::string(b ? "true" : "false"); }));
  add("optimizer", true, detail::names(s.optimizers, [](OptimizerKind k) { return std::string(nd::to_string(k)); }));
  return out;
}

inline std::size_t encoded_width(const SearchSpace& s) {
  std::size_t w = 0;
  for (const auto& seg : encoding_schema(s)) w += seg.width;
  return w;
}

/// Real-vector encoding: one-hot for categorical hyperparameters, linear
/// min-max over the space's value list for scalars.
inline std::vector<float> encode(const RawConfig& raw, const SearchSpace& s) {
  std::vector<float> out;
  auto one_hot = [&](std::size_t idx, std::size_t n) {
    if (n < 2) return;
    for (std::size_t i = 0; i < n; ++i) out.push_back(i == idx ? 1.0f : 0.0f);
  };
  auto scalar = [&](double v, double lo, double hi, std::size_t n) {
    if (n < 2) return;
    out.push_back(static_cast<float>((v - lo) / (hi - lo)));
  };
  auto minmax = [](const auto& list) {
    auto [lo, hi] = std::minmax_element(list.begin(), list.end());
    return std::pair<double, double>(static_cast<double>(*lo), static_cast<double>(*hi));
  };
  one_hot(detail::index_of(s.activations, raw.activation, "activation"), s.activations.size());
  detail::index_of(s.neurons, raw.neurons, "neurons");
  auto [nlo, nhi] = minmax(s.neurons);
  scalar(raw.neurons, nlo, nhi, s.neurons.size());
  detail::index_of(s.layers, raw.layers, "layers");
  auto [llo, lhi] = minmax(s.layers);
  scalar(raw.layers, llo, lhi, s.layers.size());
  one_hot(detail::index_of(s.layouts, raw.layout, "layout"), s.layouts.size());
  detail::index_of(s.dropouts, raw.dropout, "dropout");
  auto [dlo, dhi] = minmax(s.dropouts);
  scalar(raw.dropout, dlo, dhi, s.dropouts.size());
  detail::index_of(s.normalizations, raw.normalization, "normalization");
  scalar(raw.normalization ? 1.0 : 0.0, 0.0, 1.0, s.normalizations.size());
  one_hot(detail::index_of(s.optimizers, raw.optimizer, "optimizer"), s.optimizers.size());
  return out;
}

/// Cartesian product of the value lists in schema order, keeping the first
/// config for every distinct network (activation, widths, dropout,
/// normalization, optimizer). Ids follow that order.
inline std::vector<Config> enumerate_grid(const SearchSpace& s) {
  using Key = std::tuple<int, std::vector<int>, double, bool, int>;
  std::set<Key> seen;
  std::vector<Config> grid;
  for (Activation a : s.activations)
    for (int n : s.neurons)
      for (int l : s.layers)
        for (Layout lay : s.layouts)
          for (double d : s.dropouts)
            for (bool bn : s.normalizations)
              for (OptimizerKind o : s.optimizers) {
                RawConfig raw{a, n, l, lay, d, bn, o};
                Key key{static_cast<int>(a), raw.widths(), d, bn, static_cast<int>(o)};
                if (!seen.insert(key).second) continue;
                grid.push_back({static_cast<int>(grid.size()), raw, encode(raw, s)});
              }
  return grid;
}

// ---------------------------------------------------------------------------
// Grid file: {"space": name, "schema": [segments], "configs": [{id, raw, encoded}]}

inline nlohmann::json raw_to_json(const RawConfig& r) {
  return {{"activation", nd::to_string(r.activation)},
          {"neurons", r.neurons},
          {"layers", r.layers},
          {"layout", to_string(r.layout)},
          {"dropout", r.dropout},
          {"normalization", r.normalization},
          {"optimizer", nd::to_string(r.optimizer)}};
}

inline RawConfig raw_from_json(const nlohmann::json& j) {
  RawConfig r;
  r.activation = parse_activation(j.at("activation").get<std::string>());
  r.neurons = j.at("neurons").get<int>();
  r.layers = j.at("layers").get<int>();
  r.layout = parse_layout(j.at("layout").get<std::string>());
  r.dropout = j.at("dropout").get<double>();
  r.normalization = j.at("normalization").get<bool>();
  r.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  return r;
}

inline nlohmann::json grid_to_json(const SearchSpace& space, const std::vector<Config>& grid) {
  nlohmann::json schema = nlohmann::json::array();
  for (const auto& seg : encoding_schema(space)) {
    schema.push_back({{"name", seg.name},
                      {"encoding", seg.one_hot ? "one-hot" : "scalar"},
                      {"offset", seg.offset},
                      {"width", seg.width},
                      {"values", seg.values}});
  }
  nlohmann::json configs = nlohmann::json::array();
  for (const auto& c : grid) configs.push_back({{"id", c.id}, {"raw", raw_to_json(c.raw)}, {"encoded", c.encoded}});
  return {{"space", to_string(space.name)}, {"schema", schema}, {"configs", configs}};
}

inline std::vector<Config> grid_from_json(const nlohmann::json& j) {
  std::vector<Config> grid;
  for (const auto& c : j.at("configs")) {
    grid.push_back({c.at("id").get<int>(), raw_from_json(c.at("raw")), c.at("encoded").get<std::vector<float>>()});
  }
  return grid;
}

}  // namespace dmfbs
