#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mscmt/ops.hpp"
#include "mscmt/rng.hpp"
#include "mscmt/tensor.hpp"

namespace mscmt {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
  std::string worst;  // "tensor#i[j]: analytic=.. numeric=.."
};

// Compares analytic gradients against central finite differences for a scalar
// function of the given inputs. coords_per_tensor caps how many coordinates are
// probed per input (0 = all), sampled deterministically from sample_seed.
inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

template <typename Fn>
GradCheckResult finite_difference_check(Fn&& fn,
                                        const std::vector<TensorPtr<double>>& inputs,
                                        double h = 1e-5, int coords_per_tensor = 0,
                                        uint64_t sample_seed = 1) {
  for (auto& t : inputs) t->zero_grad();
  auto loss = fn();
  if (!loss->is_scalar()) throw ShapeError("finite_difference_check: fn must return a scalar");
  backward(loss);

  GradCheckResult res;
  Rng rng(sample_seed);
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& t = inputs[ti];
    std::vector<size_t> coords(t->values.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords_per_tensor > 0 && coords.size() > static_cast<size_t>(coords_per_tensor)) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(coords_per_tensor);
    }
    for (size_t j : coords) {
      double saved = t->values[j];
      t->values[j] = saved + h;
      double fp;
      {
        NoGradGuard ng;
        fp = fn()->values[0];
      }
      t->values[j] = saved - h;
      double fm;
      {
        NoGradGuard ng;
        fm = fn()->values[0];
      }
      t->values[j] = saved;
      double numeric = (fp - fm) / (2 * h);
      double analytic = t->grad[j];
      double e = rel_err(analytic, numeric);
      ++res.checked;
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst = "tensor#" + std::to_string(ti) + "[" + std::to_string(j) +
                    "]: analytic=" + std::to_string(analytic) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  return res;
}

}  // namespace mscmt
