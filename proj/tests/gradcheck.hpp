#pragma once

// Central finite-difference oracle for gradients. Used at 64-bit precision
// on tiny shapes; the analytic path is the production code instantiated on
// double.

#include <vts/autodiff.hpp>

#include <cmath>
#include <functional>
#include <vector>

namespace vts::testing {

/// Max relative gradient error over every entry of every listed leaf.
/// `build` must construct a fresh scalar loss from the leaves' current
/// values each time it is called.
template <class BuildFn>
double max_rel_grad_err(const std::vector<ad::Var<double>>& leaves, BuildFn&& build, double h = 1e-5) {
  std::vector<Tensor<double>> analytic;
  {
    for (const auto& v : leaves) const_cast<ad::Var<double>&>(v).grad().fill(0.0);
    ad::Var<double> loss = build();
    ad::backward(loss);
    for (const auto& v : leaves) analytic.push_back(v.grad());
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    auto& leaf = const_cast<ad::Var<double>&>(leaves[p]);
    for (std::size_t i = 0; i < leaf.value().numel(); ++i) {
      const double keep = leaf.value()[i];
      leaf.value()[i] = keep + h;
      const double fp = build().scalar();
      leaf.value()[i] = keep - h;
      const double fm = build().scalar();
      leaf.value()[i] = keep;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p][i];
      const double mag = std::max(std::abs(a), std::abs(numeric));
      if (mag > 1e-7) worst = std::max(worst, std::abs(a - numeric) / mag);
    }
  }
  return worst;
}

inline Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace vts::testing
