// Copyright 2026 The empchat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "empchat/optim.hpp"

#include <cmath>

namespace empchat {

template <typename T>
AdamState<T>::AdamState(const ParamList<T>& params) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const NamedParam<T>& p : params) {
    m.emplace_back(p.tensor->numel(), T{});
    v.emplace_back(p.tensor->numel(), T{});
  }
}

template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state, const AdamConfig& config) {
  if (!(config.lr > 0)) throw std::invalid_argument("adam_step: lr must be positive");
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& p = *params[i].tensor;
    if (state.m[i].size() != p.numel()) {
      throw ShapeError("adam_step: moment size mismatch for " + params[i].name + " " +
                       shape_string(p.shape()));
    }
    if (!p.has_grad()) continue;
    for (T g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + params[i].name);
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T step_size = static_cast<T>(config.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(config.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i].tensor;
    std::vector<T>& m = state.m[i];
    std::vector<T>& v = state.v[i];
    std::span<T> w = p.data();
    std::span<const T> g = p.grad();
    const bool has_grad = p.has_grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T gj = has_grad ? g[j] : T{};
      m[j] = b1 * m[j] + (T{1} - b1) * gj;
      v[j] = b2 * v[j] + (T{1} - b2) * gj * gj;
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

template <typename T>
double grad_norm(const ParamList<T>& params) {
  double total = 0.0;
  for (const NamedParam<T>& p : params) {
    for (T g : p.tensor->grad()) total += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(total);
}

template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const T factor = static_cast<T>(max_norm / (norm + 1e-6));
    for (const NamedParam<T>& p : params) {
      for (T& g : p.tensor->grad()) g *= factor;
    }
  }
  return norm;
}

template <typename T>
void zero_grad(const ParamList<T>& params) {
  for (const NamedParam<T>& p : params) p.tensor->zero_grad();
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(const ParamList<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step(const ParamList<double>&, AdamState<double>&, const AdamConfig&);
template double grad_norm(const ParamList<float>&);
template double grad_norm(const ParamList<double>&);
template double clip_grad_norm(const ParamList<float>&, double);
template double clip_grad_norm(const ParamList<double>&, double);
template void zero_grad(const ParamList<float>&);
template void zero_grad(const ParamList<double>&);

}  // namespace empchat
