#pragma once

// Shared helpers for the unit suites: random tensors and a central
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "maq2l/tensor.hpp"

namespace maq2l::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(shape, std::move(v), requires_grad);
}

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
// turning roundoff into huge ratios.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares analytic grads of loss_fn() w.r.t. every leaf in `leaves` against
// central differences. loss_fn must rebuild the graph from the leaves' current
// values on each call.
inline GradCheckResult grad_check(const std::vector<Tensor>& leaves, const std::function<Tensor()>& loss_fn,
                                  double step = 1e-5, std::size_t max_entries_per_leaf = 0) {
  std::vector<Tensor> params = leaves;
  for (auto& p : params) p.zero_grad();
  loss_fn().backward();
  GradCheckResult res;
  for (auto& p : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) {
      auto g = p.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    const std::size_t limit = max_entries_per_leaf ? std::min(max_entries_per_leaf, p.numel()) : p.numel();
    const std::size_t stride = std::max<std::size_t>(1, p.numel() / limit);
    for (std::size_t i = 0; i < p.numel(); i += stride) {
      auto data = p.mutable_data();
      const double orig = data[i];
      double plus, minus;
      {
        NoGradGuard ng;
        data[i] = orig + step;
        plus = loss_fn().item();
        data[i] = orig - step;
        minus = loss_fn().item();
        data[i] = orig;
      }
      const double numeric = (plus - minus) / (2.0 * step);
      res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[i], numeric));
      ++res.checked;
    }
  }
  for (auto& p : params) p.zero_grad();
  return res;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace maq2l::testing
