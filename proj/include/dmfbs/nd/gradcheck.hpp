#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>

#include "dmfbs/nd/tape.hpp"

namespace dmfbs::nd {

template <class T>
using LossClosure = std::function<Var<T>(Tape<T>&)>;

struct GradCheckOptions {
  double step = 1e-3;
  /// 0 checks every coordinate; otherwise a seeded sample of this many per array.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t sample_seed = 0;
  bool training = false;
  /// Every tape gets this seed, so dropout masks are identical across evaluations.
  std::uint64_t tape_seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

/// Compares tape gradients against central differences,
/// |analytic - numeric| / max(1, |numeric|), maximized over checked coordinates.
template <class T>
GradCheckResult grad_check_detailed(const LossClosure<T>& loss_fn, const ParamSet<T>& params,
                                    const GradCheckOptions& opt = {}) {
  if (!(opt.step > 0.0)) throw UsageError("grad_check step must be positive");
  ParamSet<T> work = params;
  auto evaluate = [&](ParamSet<T>& ps) {
    Tape<T> tape(&ps, opt.training, opt.tape_seed);
    const T v = loss_fn(tape).item();
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("grad_check: loss is not finite");
    return static_cast<double>(v);
  };

  ParamSet<T> analytic;
  {
    ParamSet<T> ps = params;
    Tape<T> tape(&ps, opt.training, opt.tape_seed);
    Var<T> loss = loss_fn(tape);
    if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("grad_check: loss is not finite");
    analytic = tape.backward(loss);
  }

  std::mt19937_64 rng(opt.sample_seed);
  GradCheckResult result;
  for (auto& [name, tensor] : work) {
    if (is_buffer(name)) continue;
    std::vector<std::size_t> coords(tensor.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opt.max_coords_per_tensor > 0 && coords.size() > opt.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_tensor);
    }
    for (std::size_t i : coords) {
      const T saved = tensor[i];
      tensor[i] = static_cast<T>(static_cast<double>(saved) + opt.step);
      ParamSet<T> plus = work;
      const double fp = evaluate(plus);
      tensor[i] = static_cast<T>(static_cast<double>(saved) - opt.step);
      ParamSet<T> minus = work;
      const double fm = evaluate(minus);
      tensor[i] = saved;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double err = std::abs(static_cast<double>(analytic.at(name)[i]) - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coords_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

template <class T>
double grad_check(const LossClosure<T>& loss_fn, const ParamSet<T>& params, double step,
                  std::size_t max_coords_per_tensor = 0) {
  GradCheckOptions opt;
  opt.step = step;
  opt.max_coords_per_tensor = max_coords_per_tensor;
  return grad_check_detailed(loss_fn, params, opt).max_rel_error;
}

}  // namespace dmfbs::nd
