#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "numerics/tensor.hpp"

namespace rohil {

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
};

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::int64_t step = 0;
};

template <typename T>
AdamState<T> make_adam_state(std::span<const ParamRef<T>> params, AdamOptions options = {}) {
  AdamState<T> state;
  state.options = options;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.tensor->shape(), T(0));
    state.second_moment.emplace_back(p.tensor->shape(), T(0));
  }
  return state;
}

// Bias-corrected Adam. All gradients are validated before any parameter moves.
template <typename T>
void adam_step(std::span<const ParamRef<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    fail(ErrorCode::kShapeMismatch, "adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].tensor->shape() || state.first_moment[i].shape() != grads[i].shape()) {
      fail(ErrorCode::kShapeMismatch, "adam_step: shape mismatch for " + params[i].name + ": " +
                                          shape_str(grads[i].shape()) + " vs " +
                                          shape_str(params[i].tensor->shape()));
    }
    if (!grads[i].all_finite()) fail(ErrorCode::kNonFinite, "adam_step: non-finite gradient for " + params[i].name);
  }
  const AdamOptions& o = state.options;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const T b1 = static_cast<T>(o.beta1);
  const T b2 = static_cast<T>(o.beta2);
  const T step_size = static_cast<T>(o.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(o.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<Eigen::Index>(grads[i].size());
    Eigen::Map<Arr> p(params[i].tensor->data(), n);
    Eigen::Map<Arr> m(state.first_moment[i].data(), n);
    Eigen::Map<Arr> v(state.second_moment[i].data(), n);
    Eigen::Map<const Arr> g(grads[i].data(), n);
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    p -= step_size * m / ((v * inv_bc2).sqrt() + eps);
  }
}

}  // namespace rohil
