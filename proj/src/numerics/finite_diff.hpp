#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "numerics/adam.hpp"

namespace rohil {

// Central finite-difference gradient of a scalar function of the given parameters.
// Parameters are perturbed in place and restored.
inline std::vector<Tensor<double>> finite_difference_gradient(std::span<const ParamRef<double>> params,
                                                              const std::function<double()>& loss,
                                                              double step = 1e-5) {
  std::vector<Tensor<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    Tensor<double>& t = *p.tensor;
    Tensor<double> g(t.shape());
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double saved = t[k];
      t[k] = saved + step;
      const double up = loss();
      t[k] = saved - step;
      const double down = loss();
      t[k] = saved;
      g[k] = (up - down) / (2.0 * step);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// ||a - b|| / max(||a||, ||b||, floor) over all tensors jointly.
inline double relative_error(std::span<const Tensor<double>> a, std::span<const Tensor<double>> b,
                             double floor = 1e-12) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      diff += (a[i][k] - b[i][k]) * (a[i][k] - b[i][k]);
      na += a[i][k] * a[i][k];
      nb += b[i][k] * b[i][k];
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace rohil
